import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cvarsgd.importance import GaussianShiftProposal
from cvarsgd.models import ScoredBatch, StochasticModel, gaussian_mean_family
from cvarsgd.optimizer import ProjectionBox, Schedules, cvarsgd, evaluate_policy, project
from cvarsgd.oracle import gaussian_truth


class ConstantModel(StochasticModel):
    k = 2

    def sample(self, theta, n, rng):
        return ScoredBatch(rewards=np.full(n, 4.0), scores=rng.normal(size=(n, 2)))


class ExplodingModel(StochasticModel):
    """Fails on the third draw, like an estimator hitting a degenerate batch."""

    k = 1

    def __init__(self):
        self.calls = 0

    def sample(self, theta, n, rng):
        self.calls += 1
        if self.calls == 3:
            return ScoredBatch(rewards=np.full(n, np.nan), scores=np.zeros((n, 1)))
        return gaussian_mean_family().sample(theta, n, rng)


class TestProject:
    def test_examples(self):
        box = ProjectionBox.uniform(2, -1, 1)
        np.testing.assert_array_equal(project(box, [0.2, -0.3]), [0.2, -0.3])
        np.testing.assert_array_equal(project(box, [2.0, -3.0]), [1.0, -1.0])
        np.testing.assert_array_equal(project(ProjectionBox([0, 0], [1, 5]), [3.0, 3.0]), [1.0, 3.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            project(ProjectionBox.uniform(2, -1, 1), [0.0])

    def test_bad_box(self):
        with pytest.raises(ValueError):
            ProjectionBox([0.0, 1.0], [1.0, 1.0])

    @given(arrays(np.float64, 3, elements=st.floats(-1e6, 1e6)))
    def test_projection_is_idempotent_and_feasible(self, theta):
        box = ProjectionBox([-1.0, 0.0, 2.0], [1.0, 0.5, 3.0])
        p = project(box, theta)
        assert box.contains(p)
        np.testing.assert_array_equal(project(box, p), p)


class TestSchedules:
    def test_default(self):
        s = Schedules.default(0.05)
        assert s.n_min == 80
        assert s.step(4) == 0.25
        assert s.batch(1) == 80
        assert s.batch(10**4) == math.ceil(math.log(10**4 + 1) ** 4)

    def test_fixed(self):
        s = Schedules.fixed(0.01, 1000)
        assert s.step(1) == s.step(500) == 0.01
        assert s.batch(7) == 1000
        assert Schedules.fixed(0.5, 10, decay=True).step(5) == 0.1

    def test_one_based(self):
        with pytest.raises(ValueError):
            Schedules().step(0)

    def test_harmonic_partial_sums(self):
        i = np.arange(1, 10**6 + 1)
        s = Schedules.default(0.5)
        steps = s.eps0 / i
        # sum eps_i grows like log(n); sum eps_i^2 stays below pi^2/6
        assert steps.sum() > 14 and steps[: 10**3].sum() < 8
        assert (steps**2).sum() < math.pi**2 / 6


class TestCvarsgd:
    def test_converges_to_boundary(self):
        box = ProjectionBox.uniform(1, -1, 1)
        tr = cvarsgd(gaussian_mean_family(), [-0.5], 0.5, box, Schedules.default(0.5), 500, seed=0)
        assert abs(tr.final_theta[0] - 1.0) < 0.05

    def test_zero_gradient_never_moves(self):
        box = ProjectionBox.uniform(2, -1, 1)
        tr = cvarsgd(ConstantModel(), [0.3, -0.2], 0.2, box, Schedules.default(0.2), 30, seed=1)
        np.testing.assert_array_equal(tr.final_theta, [0.3, -0.2])
        assert all(np.array_equal(r.theta, [0.3, -0.2]) for r in tr.records)

    def test_single_iteration(self):
        box = ProjectionBox.uniform(1, -1, 1)
        tr = cvarsgd(gaussian_mean_family(), [0.0], 0.5, box, Schedules.default(0.5), 1, seed=1)
        assert len(tr) == 1
        assert tr.records[0].iteration == 1

    def test_initial_point_is_projected(self):
        box = ProjectionBox.uniform(1, -1, 1)
        tr = cvarsgd(gaussian_mean_family(), [7.0], 0.5, box, Schedules.default(0.5), 3, seed=1)
        assert tr.records[0].theta[0] == 1.0

    @given(st.integers(0, 10**6), st.sampled_from(["crude", "plain", "is"]))
    def test_feasible_and_deterministic(self, seed, estimator):
        box = ProjectionBox.uniform(1, -0.3, 0.3)
        kw = dict(estimator=estimator, proposal=GaussianShiftProposal(), refit_period=5,
                  saa_samples=500, saa_steps=5)
        a = cvarsgd(gaussian_mean_family(), [0.0], 0.1, box, Schedules.fixed(2.0, 40), 12, seed=seed, **kw)
        b = cvarsgd(gaussian_mean_family(), [0.0], 0.1, box, Schedules.fixed(2.0, 40), 12, seed=seed, **kw)
        assert all(box.contains(r.theta) for r in a.records)
        np.testing.assert_array_equal(a.thetas, b.thetas)
        assert [r.cvar_return for r in a.records] == [r.cvar_return for r in b.records]

    def test_failure_keeps_partial_trace(self):
        box = ProjectionBox.uniform(1, -1, 1)
        tr = cvarsgd(ExplodingModel(), [0.0], 0.5, box, Schedules.default(0.5), 10, seed=0)
        assert tr.failed_iteration == 3
        assert len(tr) == 2
        assert "ValueError" in tr.error

    def test_is_needs_proposal(self):
        box = ProjectionBox.uniform(1, -1, 1)
        with pytest.raises(ValueError):
            cvarsgd(gaussian_mean_family(), [0.0], 0.5, box, Schedules(), 1, estimator="is")

    def test_is_run_records_omega(self):
        box = ProjectionBox.uniform(1, -1, 1)
        tr = cvarsgd(gaussian_mean_family(), [0.0], 0.05, box, Schedules.fixed(0.1, 200), 4, seed=3,
                     estimator="is", proposal=GaussianShiftProposal(), refit_period=2,
                     saa_samples=2000, saa_steps=20)
        assert all(r.omega is not None and r.omega[0] < 0 for r in tr.records)

    def test_ascent_improves_cvar(self):
        box = ProjectionBox.uniform(1, -1, 1)
        tr = cvarsgd(gaussian_mean_family(), [-0.8], 0.3, box, Schedules.default(0.3), 200, seed=5)
        before = evaluate_policy(gaussian_mean_family(), [-0.8], 0.3, 10**5, seed=1).cvar
        after = evaluate_policy(gaussian_mean_family(), tr.final_theta, 0.3, 10**5, seed=1).cvar
        assert after > before


class TestEvaluate:
    def test_constant(self):
        ev = evaluate_policy(ConstantModel(), [0.0, 0.0], 0.1, 100, seed=0)
        assert ev.mean == ev.cvar == 4.0
        assert ev.counts.sum() == 100

    def test_gaussian_cvar(self):
        ev = evaluate_policy(gaussian_mean_family(), [0.0], 0.05, 10**6, seed=0)
        assert abs(ev.cvar - gaussian_truth(0.0, 0.05).cvar) < 0.02
        assert ev.cvar <= ev.mean

    def test_explicit_edges(self):
        ev = evaluate_policy(gaussian_mean_family(), [0.0], 0.05, 1000, seed=0, bins=np.linspace(-10, 10, 5))
        assert ev.counts.sum() == 1000 and ev.edges.size == 5

    def test_too_few_episodes(self):
        with pytest.raises(ValueError):
            evaluate_policy(gaussian_mean_family(), [0.0], 0.05, 19)
