import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cvarsgd.risk import (check_alpha, empirical_cdf, empirical_cvar, empirical_var,
                          sorted_tail, tail_count)

finite = st.floats(-1e6, 1e6, allow_nan=False)
reward_arrays = arrays(np.float64, st.integers(1, 60), elements=finite)
alphas = st.floats(0.001, 0.999)


class TestExamples:
    def test_cdf(self):
        assert empirical_cdf([1, 2, 3], 2) == pytest.approx(2 / 3)
        assert empirical_cdf([5], 0) == 0.0
        assert empirical_cdf([1, 1, 1, 1], 1) == 1.0

    def test_var(self):
        assert empirical_var([5, 1, 3, 2, 4], 0.4) == 2
        assert empirical_var([7], 0.5) == 7

    def test_cvar(self):
        assert empirical_cvar([1, 2, 3, 4, 5], 0.4) == 1.5
        assert empirical_cvar([3.25] * 7, 0.3) == 3.25

    def test_normal_quantile_and_cvar(self):
        z = np.random.default_rng(1).standard_normal(10**6)
        assert abs(empirical_var(z, 0.05) - (-1.6448536269514729)) < 0.01
        assert abs(empirical_cvar(z, 0.5) + math.sqrt(2 / math.pi)) < 0.01

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.5, float("nan")])
    def test_rejects_bad_alpha(self, alpha):
        with pytest.raises(ValueError):
            empirical_var([1.0, 2.0], alpha)

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            empirical_cvar([], 0.5)
        with pytest.raises(ValueError):
            empirical_var([1.0, np.inf], 0.5)


class TestTailCount:
    @pytest.mark.parametrize("alpha,n,m", [(0.4, 5, 2), (0.5, 2, 1), (0.07, 100, 7),
                                           (0.05, 1000, 50), (0.01, 200, 2), (0.999, 3, 3)])
    def test_values(self, alpha, n, m):
        assert tail_count(alpha, n) == m

    @given(alphas, st.integers(1, 10_000))
    def test_is_smallest_count_reaching_alpha(self, alpha, n):
        m = tail_count(alpha, n)
        assert 1 <= m <= n
        assert m / n >= alpha
        assert m == 1 or (m - 1) / n < alpha

    def test_ties_take_stable_order(self):
        idx, var = sorted_tail(np.array([2.0, 1.0, 1.0, 1.0, 3.0]), 0.4)
        np.testing.assert_array_equal(idx, [1, 2])
        assert var == 1.0


class TestProperties:
    @given(reward_arrays, st.floats(-1e6, 1e6))
    def test_cdf_monotone(self, r, z):
        assert 0.0 <= empirical_cdf(r, z) <= empirical_cdf(r, z + 1.0) <= 1.0

    @given(reward_arrays, alphas, alphas)
    def test_var_monotone_in_alpha(self, r, a, b):
        lo, hi = sorted((a, b))
        assert empirical_var(r, lo) <= empirical_var(r, hi)

    @given(reward_arrays, alphas)
    def test_order_bound(self, r, a):
        assert empirical_cvar(r, a) <= empirical_var(r, a) + 1e-9 * max(1.0, abs(r).max())
        assert empirical_var(r, a) <= r.max()

    @given(arrays(np.float64, st.integers(1, 40), elements=st.integers(-1000, 1000).map(float)),
           alphas, st.integers(-1000, 1000))
    def test_translation_equivariance(self, r, a, c):
        # integer data keeps the shift exact in floating point
        assert empirical_var(r + c, a) == empirical_var(r, a) + c
        assert empirical_cvar(r + c, a) == pytest.approx(empirical_cvar(r, a) + c, abs=1e-9)

    @given(reward_arrays, alphas)
    def test_cdf_at_var_reaches_alpha(self, r, a):
        v = empirical_var(r, a)
        assert empirical_cdf(r, v) >= a
        assert check_alpha(a) == a

    def test_consistency_rate(self):
        rng = np.random.default_rng(5)
        errs = []
        for n in (10**3, 10**5):
            errs.append(np.mean([abs(empirical_var(rng.standard_normal(n), 0.25) + 0.6744897501960817)
                                 for _ in range(40)]))
        # a hundredfold sample increase should cut the error roughly tenfold
        assert 4 < errs[0] / errs[1] < 25
