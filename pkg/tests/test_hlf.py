import pytest

from hlfspn.hlf import BASELINE, FACTOR_RANGES, FACTORS, HlfParams, apply_factor, build
from hlfspn.net import INF, validate_net
from hlfspn.reachability import explore, solve_net, token_distribution


def test_baseline_values():
    assert BASELINE.factors() == {
        "Arrival Rate": 10.0, "Block Timeout": 2000.0, "Committing Time": 1150.0,
        "Ordering Time": 15.0, "Endorsing Time": 160.0, "Block Size": 10, "Endorsing Queue Size": 10,
    }
    assert BASELINE.arrival_mean_ms == pytest.approx(100.0)


def test_ranges_cover_baseline():
    for factor, (lo, hi) in FACTOR_RANGES.items():
        assert lo < BASELINE.factors()[factor] < hi


@pytest.mark.parametrize("field, value", [
    ("arrival_rate", 0), ("commit_time_ms", -1), ("block_size", 2.5), ("endorse_queue_size", 0),
    ("order_time_ms", float("nan")), ("p1_capacity", 0),
])
def test_invalid_params(field, value):
    with pytest.raises(ValueError):
        HlfParams(**{field: value})


def test_dict_round_trip():
    p = HlfParams(block_size=20, arrival_rate=12.5)
    assert HlfParams.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        HlfParams.from_dict({"bogus": 1})


def test_apply_factor():
    assert apply_factor(BASELINE, "Block Size", 45) == HlfParams(block_size=45)
    assert apply_factor(BASELINE, "Arrival Rate", 10) == BASELINE
    assert apply_factor(BASELINE, "Committing Time", 575).commit_time_ms == 575
    assert apply_factor(BASELINE, "Endorsing Queue Size", 7.6).endorse_queue_size == 8
    with pytest.raises(KeyError):
        apply_factor(BASELINE, "Nope", 1)


def test_structure():
    hlf = build(BASELINE)
    net = hlf.net
    assert validate_net(net) == []
    assert net.place("en_q").initial == 10 and net.place("en_q").capacity == 10
    assert net.place("P2").capacity == 10
    assert net.place("P0").capacity == INF
    assert net.transition("FullBlock").immediate
    assert net.transition("Commit").server == "infinite"
    assert net.transition("Arrival").mean_ms == pytest.approx(100.0)
    full = [a for a in net.arcs if a.target == "FullBlock"]
    assert full[0].multiplicity == 10
    assert [a.kind for a in net.arcs if a.target == "BatchTimeout"] == ["flush"]
    assert hlf.in_progress_places == ("P0", "P1", "P2", "block")
    assert hlf.block_forming == ("FullBlock", "BatchTimeout")


def test_describe_mentions_guard():
    text = build(BASELINE).describe()
    assert "guard: m(P2) >= 1 && m(P2) < 10" in text
    assert "unsatisfiable" not in text


def test_block_size_one():
    hlf = build(HlfParams(block_size=1))
    text = hlf.describe()
    assert "guard unsatisfiable" in text
    ss = solve_net(hlf.net)
    assert ss.firing_rate("BatchTimeout") == 0.0
    assert ss.firing_rate("FullBlock") == pytest.approx(ss.firing_rate("Order"), rel=1e-6)


def test_unbounded_option():
    hlf = build(HlfParams(p1_capacity=None, block_capacity=None))
    assert hlf.net.place("P1").capacity == INF and hlf.net.place("block").capacity == INF


@pytest.mark.parametrize("factor", list(FACTORS))
@pytest.mark.parametrize("end", [0, 1])
def test_range_endpoints_are_finite(factor, end):
    params = apply_factor(BASELINE, factor, FACTOR_RANGES[factor][end])
    g = explore(build(params).net)
    assert g.n_states < 500_000


def test_truncation_mass_negligible():
    # the worst case for the block place is the slowest commit
    params = apply_factor(BASELINE, "Committing Time", 1725)
    ss = solve_net(build(params).net)
    assert token_distribution(ss, "block").get(params.block_capacity, 0.0) < 1e-9
    assert token_distribution(ss, "P1").get(params.p1_capacity, 0.0) < 1e-9
