import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cvarsgd.gcvar import gcvar_estimate
from cvarsgd.importance import (GaussianShiftProposal, QuantileUndefinedError, fit_proposal_on_batch,
                                fit_proposal_saa, is_empirical_var, is_gcvar_estimate, saa_objective,
                                squared_tail_terms, variance_comparison)
from cvarsgd.models import ScoredBatch, gaussian_mean_family
from cvarsgd.risk import empirical_var

rewards_st = arrays(np.float64, st.integers(1, 60), elements=st.floats(-1e3, 1e3))


def weighted(rewards, lr, scores=None):
    rewards = np.asarray(rewards, float)
    scores = np.ones((rewards.size, 1)) if scores is None else scores
    with np.errstate(divide="ignore"):
        return ScoredBatch(rewards=rewards, scores=scores, log_lr=np.log(np.asarray(lr, float)))


class TestIsVar:
    def test_unit_ratios_match_crude(self):
        r = [5.0, 1.0, 3.0, 2.0, 4.0]
        assert is_empirical_var(weighted(r, np.ones(5)), 0.4) == empirical_var(r, 0.4)

    def test_hand_accumulation(self):
        assert is_empirical_var(weighted([1.0, 2.0, 3.0], [1.5, 1.5, 0.0 + 1e-300]), 0.5) == 1.0

    def test_undefined_quantile(self):
        with pytest.raises(QuantileUndefinedError):
            is_empirical_var(weighted([1.0, 2.0], [0.1, 0.1]), 0.5)

    def test_rejects_zero_ratio(self):
        with pytest.raises(ValueError):
            is_empirical_var(weighted([1.0, 2.0], [0.0, 2.0]), 0.5)

    def test_shifted_proposal_quantile(self):
        prop = GaussianShiftProposal()
        b = prop.sample([0.0], [-1.0], 10**6, np.random.default_rng(0))
        assert abs(is_empirical_var(b, 0.05) - (-1.6448536269514729)) < 0.01

    @given(rewards_st, st.floats(0.01, 0.99))
    def test_identity_reduction_bit_for_bit(self, r, alpha):
        scores = np.random.default_rng(r.size).normal(size=(r.size, 3))
        b = ScoredBatch(rewards=r, scores=scores, log_lr=np.zeros(r.size))
        crude = gcvar_estimate(ScoredBatch(rewards=r, scores=scores), alpha)
        weighted_est = is_gcvar_estimate(b, alpha)
        assert is_empirical_var(b, alpha) == empirical_var(r, alpha)
        assert weighted_est.var_used == crude.var_used
        assert weighted_est.tail_count == crude.tail_count
        np.testing.assert_array_equal(weighted_est.grad, crude.grad)


class TestIsGcvar:
    def test_zero_scores(self):
        b = weighted(np.arange(10.0), np.full(10, 1.2), np.zeros((10, 2)))
        np.testing.assert_array_equal(is_gcvar_estimate(b, 0.3).grad, [0.0, 0.0])

    def test_shifted_proposal_unbiased(self):
        b = GaussianShiftProposal().sample([0.0], [-1.0], 10**6, np.random.default_rng(1))
        assert abs(is_gcvar_estimate(b, 0.5).grad[0] - 1.0) < 0.05

    def test_identity_proposal_sample(self):
        prop = GaussianShiftProposal()
        b = prop.sample([0.3], prop.omega0, 100, np.random.default_rng(2))
        np.testing.assert_array_equal(b.lr, np.ones(100))

    @pytest.mark.parametrize("omega", [-2.0, -0.5, 0.7])
    def test_normalized_mass(self, omega):
        n = 10**5
        b = GaussianShiftProposal().sample([1.0], [omega], n, np.random.default_rng(3))
        # f/g has variance exp(omega^2) - 1 under g
        assert abs(b.lr.mean() - 1.0) < 5 * np.sqrt(np.expm1(omega**2)) / np.sqrt(n)

    @given(st.floats(-3, 3), st.floats(-2, 2), st.floats(-4, 4))
    def test_log_ratio_matches_densities(self, theta, omega, z):
        prop = GaussianShiftProposal()
        b = ScoredBatch(rewards=[z], scores=[[z - theta]], x=np.array([[z]]))
        expected = -0.5 * (z - theta) ** 2 + 0.5 * (z - theta - omega) ** 2
        assert prop.log_ratio([theta], [omega], b)[0] == pytest.approx(expected, abs=1e-9)
        h = 1e-5
        fd = (-0.5 * (z - theta - omega - h) ** 2 + 0.5 * (z - theta - omega + h) ** 2) / (2 * h)
        assert prop.grad_log_g([theta], [omega], b)[0, 0] == pytest.approx(fd, abs=1e-5)


class TestSaa:
    def setup_method(self):
        self.model = gaussian_mean_family()
        self.prop = GaussianShiftProposal()
        self.batch = self.model.sample([0.0], 10_000, np.random.default_rng(4))

    def test_zero_steps(self):
        fit = fit_proposal_on_batch(self.prop, [0.0], 0.05, self.batch, 0, 1.0)
        np.testing.assert_array_equal(fit.omega, self.prop.omega0)

    def test_sign_and_grid_minimum(self):
        alpha = 0.05
        fit = fit_proposal_on_batch(self.prop, [0.0], alpha, self.batch, 100, 1.0)
        assert fit.omega[0] < 0
        hsq = squared_tail_terms(self.batch, alpha)
        grid = np.linspace(-4, 1, 501)
        obj = [saa_objective(self.prop, [0.0], [w], self.batch, hsq) for w in grid]
        assert abs(fit.omega[0] - grid[int(np.argmin(obj))]) < 0.05
        assert fit.objective <= min(obj) + 1e-9 * abs(min(obj))

    def test_objective_not_worse_and_monotone(self):
        fit = fit_proposal_on_batch(self.prop, [0.0], 0.01, self.batch, 50, 5.0)
        assert fit.objective <= fit.objective_start
        objs = [o for _, o in fit.history]
        assert all(b <= a for a, b in zip(objs, objs[1:]))

    def test_fit_from_model_is_reproducible(self):
        a = fit_proposal_saa(self.model, self.prop, [0.0], 0.05, 2000, 20, 1.0, seed=9)
        b = fit_proposal_saa(self.model, self.prop, [0.0], 0.05, 2000, 20, 1.0, seed=9)
        np.testing.assert_array_equal(a.omega, b.omega)

    def test_non_finite_objective_stops(self):
        # a huge rate overflows exp(); backtracking must fall back to finite iterates
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_proposal_on_batch(self.prop, [0.0], 0.05, self.batch, 5, 1e6)
        assert np.isfinite(fit.objective)

    @pytest.mark.parametrize("bad", [{"gd_steps": -1}, {"gd_rate": 0.0}])
    def test_rejects_bad_settings(self, bad):
        kw = {"gd_steps": 1, "gd_rate": 1.0, **bad}
        with pytest.raises(ValueError):
            fit_proposal_on_batch(self.prop, [0.0], 0.05, self.batch, **kw)


class TestVarianceComparison:
    def test_identity_proposal(self):
        m, p = gaussian_mean_family(), GaussianShiftProposal()
        vc, vi = variance_comparison(m, p, [0.0], 0.1, p.omega0, 200, 300, seed=0)
        assert vi[0] == pytest.approx(vc[0], rel=0.35)

    def test_two_replications(self):
        m, p = gaussian_mean_family(), GaussianShiftProposal()
        vc, vi = variance_comparison(m, p, [0.0], 0.1, [-1.0], 50, 2, seed=0)
        assert vc.shape == vi.shape == (1,)

    def test_rejects_one_replication(self):
        m, p = gaussian_mean_family(), GaussianShiftProposal()
        with pytest.raises(ValueError):
            variance_comparison(m, p, [0.0], 0.1, [0.0], 50, 1)
