"""Statistics checked against scipy, used here only as an independent oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special
from scipy import stats as sps

from metabwe import stats


def test_ci_on_one_to_five():
    m, h = stats.mean_ci95([1, 2, 3, 4, 5])
    assert m == 3.0
    assert h == pytest.approx(1.963, abs=1e-3)
    assert h == pytest.approx(sps.t.ppf(0.975, 4) * math.sqrt(2.5) / math.sqrt(5), abs=1e-10)


def test_ci_zero_variance_and_small_n():
    assert stats.mean_ci95([1, 1, 1, 1]) == (1.0, 0.0)
    with pytest.raises(ValueError):
        stats.mean_ci95([1.0])


def test_ci_shrinks_as_root_n():
    rng = np.random.default_rng(0)
    h = {n: np.mean([stats.mean_ci95(rng.normal(0, 1, n))[1] for _ in range(400)])
         for n in (25, 100, 400)}
    assert h[25] / h[100] == pytest.approx(2.0, rel=0.05)
    assert h[100] / h[400] == pytest.approx(2.0, rel=0.05)


def test_welch_example():
    a, b = [1, 2, 3, 4, 5], [3, 4, 5, 6, 7]
    t, df = stats.welch_statistic(a, b)
    assert t == pytest.approx(-2.0)
    assert df == pytest.approx(8.0)
    p = stats.welch_t_test(a, b)
    assert p == pytest.approx(0.0805, abs=1e-4)
    assert p == pytest.approx(sps.ttest_ind(a, b, equal_var=False).pvalue, abs=1e-10)


def test_welch_degenerate_cases():
    assert stats.welch_t_test([2, 2, 2], [2, 2, 2]) == 1.0
    assert stats.welch_t_test([1, 2, 3], [1, 2, 3]) == 1.0
    assert stats.welch_t_test([0] * 5, [1] * 5) < 1e-12
    with pytest.raises(ValueError):
        stats.welch_t_test([1], [1, 2])


samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=40)


@settings(max_examples=300, deadline=None)
@given(samples, samples)
def test_welch_matches_oracle(a, b):
    if np.var(a) < 1e-6 or np.var(b) < 1e-6:
        return
    ref = sps.ttest_ind(a, b, equal_var=False).pvalue
    assert stats.welch_t_test(a, b) == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("df", [1, 2, 3.5, 8, 30, 120, 1e4])
def test_t_distribution(df):
    for t in (-40.0, -3.0, -0.5, 0.0, 0.1, 1.96, 7.0):
        assert stats.t_cdf(t, df) == pytest.approx(sps.t.cdf(t, df), abs=1e-10)
    for p in (0.6, 0.9, 0.975, 0.999):
        assert stats.t_ppf(p, df) == pytest.approx(sps.t.ppf(p, df), rel=1e-8)


@pytest.mark.parametrize("a,b", [(0.5, 0.5), (2.0, 3.0), (10.0, 0.5), (150.0, 200.0)])
def test_incomplete_beta(a, b):
    for x in (0.0, 1e-6, 0.2, 0.5, 0.77, 0.999, 1.0):
        assert stats.betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-12)
