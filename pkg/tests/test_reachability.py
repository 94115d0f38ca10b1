import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import dense_stationary, mm1k_net, mm1k_pi
from hlfspn.hlf import BASELINE, HlfParams, build
from hlfspn.net import Arc, Place, immediate, make_net, timed
from hlfspn.reachability import (SolverError, StateSpaceError, VanishingLoopError, _generator,
                                 eliminate_vanishing, explore, solve_net, solve_steady_state,
                                 token_distribution)

METHODS = ["gauss-seidel", "power", "gmres", "direct"]


def queue_dist(ss, K):
    d = token_distribution(ss, "queue")
    return np.array([d.get(i, 0.0) for i in range(K + 1)])


def test_sink_chain():
    net = make_net([Place("p", initial=2)], [timed("t", 1.0)], [Arc("p", "t")])
    g = eliminate_vanishing(explore(net))
    assert g.n_states == 3 and len(g.tangible) == 3
    assert g.n_edges == 2


def test_state_cap():
    net = make_net([Place("p")], [timed("src", 1.0)], [Arc("src", "p", "output")])
    with pytest.raises(StateSpaceError, match="more than 1000 markings"):
        explore(net, state_cap=1000)


def test_no_vanishing_is_identity():
    g = explore(mm1k_net(1, 2, 3))
    assert eliminate_vanishing(g) is g


def test_vanishing_fold_keeps_rate():
    # A -(t, rate 0.5/ms)-> V -(imm)-> B
    net = make_net(
        [Place("a", initial=1), Place("v"), Place("b")],
        [timed("t", 2.0), immediate("i")],
        [Arc("a", "t"), Arc("t", "v", "output"), Arc("v", "i"), Arc("i", "b", "output")],
    )
    raw = explore(net)
    assert raw.vanishing.sum() == 1
    g = eliminate_vanishing(raw)
    assert g.tangible == [(1, 0, 0), (0, 0, 1)]
    assert g.n_edges == 1
    assert g.src[0] == 0 and g.dst[0] == 1 and g.value[0] == pytest.approx(0.5)
    assert net.transitions[g.trans[0]].id == "t"


def test_vanishing_split_by_weights():
    net = make_net(
        [Place("a", initial=1), Place("v"), Place("x"), Place("y")],
        [timed("t", 1.0), immediate("i", weight=1.0), immediate("j", weight=3.0)],
        [Arc("a", "t"), Arc("t", "v", "output"), Arc("v", "i"), Arc("v", "j"),
         Arc("i", "x", "output"), Arc("j", "y", "output")],
    )
    g = eliminate_vanishing(explore(net))
    rates = {g.markings[d]: v for d, v in zip(g.dst, g.value)}
    assert rates[(0, 0, 1, 0)] == pytest.approx(0.25)
    assert rates[(0, 0, 0, 1)] == pytest.approx(0.75)


def test_vanishing_loop_detected():
    net = make_net(
        [Place("a", initial=1), Place("b")],
        [immediate("ab"), immediate("ba")],
        [Arc("a", "ab"), Arc("ab", "b", "output"), Arc("b", "ba"), Arc("ba", "a", "output")],
    )
    with pytest.raises(VanishingLoopError):
        eliminate_vanishing(explore(net))


def test_order_folds_through_full_block():
    hlf = build(BASELINE)
    net = hlf.net
    g = eliminate_vanishing(explore(net))
    order = net.transition_index["Order"]
    pi2, pb = net.place_index["P2"], net.place_index["block"]
    found = 0
    for s, t, d in zip(g.src, g.trans, g.dst):
        m = g.markings[s]
        # a full block place (truncation) leaves FullBlock waiting for room
        if t == order and m[pi2] == BASELINE.block_size - 1 and m[pb] < BASELINE.block_capacity:
            assert g.markings[d][pi2] == 0
            assert g.markings[d][pb] == g.markings[s][pb] + 1
            found += 1
    assert found > 0


def test_hlf_baseline_state_count():
    g = explore(build(BASELINE).net)
    assert g.n_states == 25014
    assert len(eliminate_vanishing(g).tangible) == 23023


def test_two_state_symmetric():
    net = make_net([Place("a", initial=1), Place("b")], [timed("ab", 5.0), timed("ba", 5.0)],
                   [Arc("a", "ab"), Arc("ab", "b", "output"), Arc("b", "ba"), Arc("ba", "a", "output")])
    ss = solve_net(net)
    assert ss.probability == pytest.approx([0.5, 0.5])


@pytest.mark.parametrize("method", METHODS)
def test_mm1k_small(method):
    ss = solve_net(mm1k_net(1.0, 2.0, 3), method=method)
    assert queue_dist(ss, 3) == pytest.approx([8 / 15, 4 / 15, 2 / 15, 1 / 15], abs=1e-9)
    assert token_distribution(ss, "queue") == pytest.approx({0: 8 / 15, 1: 4 / 15, 2: 2 / 15, 3: 1 / 15})


@given(st.sampled_from([0.1, 0.5, 0.9, 2.0]), st.integers(1, 20))
def test_mm1k_oracle(rho, K):
    ss = solve_net(mm1k_net(rho, 1.0, K))
    assert np.abs(queue_dist(ss, K) - mm1k_pi(rho, 1.0, K)).max() < 1e-8


def test_methods_agree_with_dense_null_vector():
    params = HlfParams(block_size=3, endorse_queue_size=3, p1_capacity=3, block_capacity=3)
    g = eliminate_vanishing(explore(build(params).net))
    ref = dense_stationary(_generator(g).toarray())
    for method in METHODS:
        ss = solve_steady_state(g, method=method)
        assert np.abs(ss.probability - ref).max() < 1e-8, method


def test_frozen_net_point_mass():
    net = make_net([Place("p", initial=4)], [timed("t", 1.0)], [])
    ss = solve_net(net)
    assert token_distribution(ss, "p") == {4: 1.0}


def test_transient_states_get_zero():
    # a -> b is one-way, b <-> c recurrent
    net = make_net(
        [Place("a", initial=1), Place("b"), Place("c")],
        [timed("ab", 1.0), timed("bc", 1.0), timed("cb", 3.0)],
        [Arc("a", "ab"), Arc("ab", "b", "output"), Arc("b", "bc"), Arc("bc", "c", "output"),
         Arc("c", "cb"), Arc("cb", "b", "output")],
    )
    ss = solve_net(net)
    assert token_distribution(ss, "a") == {0: pytest.approx(1.0)}
    assert token_distribution(ss, "b")[1] == pytest.approx(0.25)


def test_two_absorbing_classes_rejected():
    net = make_net(
        [Place("a", initial=1), Place("x"), Place("y")],
        [timed("ax", 1.0), timed("ay", 1.0)],
        [Arc("a", "ax"), Arc("a", "ay"), Arc("ax", "x", "output"), Arc("ay", "y", "output")],
    )
    with pytest.raises(SolverError, match="recurrent classes"):
        solve_net(net)


def test_unknown_method():
    with pytest.raises(ValueError):
        solve_net(mm1k_net(1, 2, 2), method="magic")


def test_non_convergence_reported():
    with pytest.raises(SolverError, match="no convergence"):
        solve_net(mm1k_net(0.9, 1.0, 20), max_iter=1)


def test_firing_rates_balance_at_baseline():
    ss = solve_net(build(BASELINE).net)
    arrival, endorse, order = (ss.firing_rate(t) for t in ("Arrival", "Endorse", "Order"))
    assert endorse == pytest.approx(arrival, rel=1e-6)
    assert order == pytest.approx(arrival, rel=1e-6)
    blocks = ss.firing_rate("FullBlock") + ss.firing_rate("BatchTimeout")
    assert ss.firing_rate("Commit") == pytest.approx(blocks, rel=1e-6)


def test_p2_support_within_block_size():
    ss = solve_net(build(BASELINE).net)
    d = token_distribution(ss, "P2")
    assert set(d) <= set(range(BASELINE.block_size + 1))
    assert sum(d.values()) == pytest.approx(1.0)


def test_queue_bound_one_slot():
    g = explore(build(HlfParams(endorse_queue_size=1)).net)
    p0 = g.net.place_index["P0"]
    assert max(m[p0] for m in g.markings) == 1


def test_dump(tmp_path):
    g = explore(mm1k_net(1, 2, 2))
    path = tmp_path / "edges.tsv"
    g.dump(path)
    lines = path.read_text().splitlines()
    assert len(lines) == g.n_edges + 1
    assert lines[1].split("\t")[1] in {"arrive", "serve"}
