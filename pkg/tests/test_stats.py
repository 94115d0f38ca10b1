import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from oracles import welch_by_hand
from hlfspn.stats import RunStats, welch_from_moments, welch_t_test

samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=40)


def test_identical_sets():
    t, p = welch_t_test([1, 2, 3], [1, 2, 3])
    assert t == 0 and p == 1.0


def test_hand_computed_example():
    t, p = welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    assert t == pytest.approx(-1.0)
    assert p == pytest.approx(0.347, abs=1e-3)


@given(samples, samples)
def test_matches_reference_implementation(a, b):
    if np.std(a) < 1e-6 or np.std(b) < 1e-6:
        return
    t, p = welch_t_test(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert t == pytest.approx(welch_by_hand(a, b), rel=1e-9, abs=1e-12)
    assert t == pytest.approx(ref.statistic, rel=1e-9, abs=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=1e-7, abs=1e-12)
    assert 0.0 <= p <= 1.0


@given(samples, samples)
def test_antisymmetric(a, b):
    if np.std(a) < 1e-6 or np.std(b) < 1e-6:
        return
    t1, p1 = welch_t_test(a, b)
    t2, p2 = welch_t_test(b, a)
    assert t1 == pytest.approx(-t2, abs=1e-12) and p1 == pytest.approx(p2)


def test_degenerate_inputs():
    with pytest.raises(ValueError):
        welch_t_test([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        welch_t_test([2.0, 2.0], [3.0, 3.0])


def test_moment_form_p_value_depends_on_sample_size():
    # 1334/194 against 1320/206: p is about 0.78 with ~32 per group and
    # falls as the groups grow
    _, _, p32 = welch_from_moments(1334, 194, 32, 1320, 206, 32)
    _, _, p100 = welch_from_moments(1334, 194, 100, 1320, 206, 100)
    assert p32 == pytest.approx(0.78, abs=0.01)
    assert p100 < p32


def test_run_stats_interval():
    x = np.arange(20, dtype=float)
    s = RunStats.of(x)
    assert s.mean == pytest.approx(9.5)
    assert s.half_width == pytest.approx(stats.t.ppf(0.975, 19) * x.std(ddof=1) / math.sqrt(20))
    assert s.contains(9.5) and not s.contains(20.0)


def test_run_stats_small():
    assert RunStats.of([]).n == 0
    one = RunStats.of([3.0])
    assert one.mean == 3.0 and one.half_width == math.inf
