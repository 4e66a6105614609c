import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cvarsgd.models import (ScoredBatch, ScoredSample, as_batch, categorical_softmax_family,
                            gaussian_mean_family, score_identity_check)

thetas = st.floats(-5, 5)


def categorical_fixture():
    features = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, -1.0]])
    return categorical_softmax_family(features, [1.0, 0.0, 2.0])


class TestGaussian:
    def test_score_examples(self):
        m = gaussian_mean_family()

        class Fixed:
            def standard_normal(self, n):
                return np.full(n, 0.5)

        assert m.sample([0.0], 1, Fixed()).scores[0, 0] == 0.5
        assert m.sample([2.0], 1, Fixed()).scores[0, 0] == 0.5
        b = m.sample([2.0], 3, np.random.default_rng(0))
        np.testing.assert_allclose(b.scores[:, 0], b.rewards - 2.0)
        assert m.k == 1

    def test_score_identity(self):
        mean = score_identity_check(gaussian_mean_family(), [1.0], 10**6, seed=3)
        assert abs(mean[0]) < 4 / np.sqrt(10**6)

    def test_score_identity_single_draw(self):
        out = score_identity_check(gaussian_mean_family(), [0.0], 1, seed=1)
        assert out.shape == (1,)

    @given(thetas, st.floats(-8, 8))
    def test_score_matches_fd(self, theta, z):
        m = gaussian_mean_family()
        h = 1e-5
        fd = (m.log_density([theta + h], [z]) - m.log_density([theta - h], [z]))[0] / (2 * h)
        assert fd == pytest.approx(z - theta, rel=1e-4, abs=1e-6)

    @given(thetas, st.integers(0, 2**32 - 1))
    def test_determinism(self, theta, seed):
        m = gaussian_mean_family()
        a = m.sample([theta], 5, np.random.default_rng(seed))
        b = m.sample([theta], 5, np.random.default_rng(seed))
        np.testing.assert_array_equal(a.rewards, b.rewards)


class TestCategorical:
    def test_uniform_at_zero(self):
        m = categorical_softmax_family([[3.0], [-2.0]], [0.0, 1.0])
        np.testing.assert_allclose(m.probabilities([0.0]), [0.5, 0.5])

    def test_score_example(self):
        m = categorical_softmax_family([[1.0], [0.0]], [1.0, 0.0])
        b = m.sample([0.0], 200, np.random.default_rng(0))
        assert np.all(b.scores[b.y == 0, 0] == 0.5)
        assert np.all(b.scores[b.y == 1, 0] == -0.5)

    @given(arrays(np.float64, 2, elements=thetas))
    def test_score_matches_fd(self, theta):
        m = categorical_fixture()
        h = 1e-5
        for j in range(3):
            fd = np.zeros(2)
            for c in range(2):
                e = np.zeros(2)
                e[c] = h
                fd[c] = (m.log_density(theta + e, j) - m.log_density(theta - e, j)) / (2 * h)
            p = m.probabilities(theta)
            score = m.features[j] - p @ m.features
            assert np.max(np.abs(fd - score)) <= 1e-6

    def test_score_identity(self):
        n = 10**6
        mean = score_identity_check(categorical_fixture(), [0.3, -0.7], n, seed=11)
        assert np.all(np.abs(mean) < 4 / np.sqrt(n))

    def test_frequencies(self):
        m = categorical_fixture()
        theta = np.array([1.0, -0.5])
        b = m.sample(theta, 10**5, np.random.default_rng(2))
        freq = np.bincount(b.y, minlength=3) / b.n
        np.testing.assert_allclose(freq, m.probabilities(theta), atol=0.01)

    def test_noise_is_bounded(self):
        m = categorical_softmax_family([[1.0], [0.0]], [1.0, 0.0], eta=0.1)
        b = m.sample([0.0], 1000, np.random.default_rng(0))
        assert np.all(np.abs(b.rewards - m.rewards[b.y]) <= 0.1)

    @pytest.mark.parametrize("features,rewards", [
        ([[1.0]], [1.0]),
        ([[np.nan], [0.0]], [1.0, 0.0]),
        ([[1.0], [0.0]], [1.0]),
        ([[1.0], [np.inf]], [1.0, 0.0]),
    ])
    def test_rejects_invalid(self, features, rewards):
        with pytest.raises(ValueError):
            categorical_softmax_family(features, rewards)

    def test_mean_gradient_example(self):
        m = categorical_softmax_family([[1.0], [0.0]], [1.0, 0.0])
        assert m.mean_gradient([0.0])[0] == pytest.approx(0.25)


class TestBatch:
    def test_from_samples_round_trip(self):
        s = [ScoredSample(y=None, x=np.zeros(1), reward=float(i), score=np.array([i, -i]))
             for i in range(3)]
        b = as_batch(s)
        assert b.n == 3 and b.k == 2
        np.testing.assert_array_equal(b.lr, np.ones(3))
        assert [x.reward for x in b] == [0.0, 1.0, 2.0]

    def test_rejects_inconsistent_scores(self):
        s = [ScoredSample(None, None, 0.0, np.zeros(2)), ScoredSample(None, None, 1.0, np.zeros(3))]
        with pytest.raises(ValueError):
            as_batch(s)

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            as_batch([])
        with pytest.raises(ValueError):
            as_batch(ScoredBatch(rewards=np.array([np.nan]), scores=np.zeros((1, 1))))
        with pytest.raises(ValueError):
            as_batch(ScoredBatch(rewards=np.array([1.0]), scores=np.array([[np.inf]])))

    def test_likelihood_ratio(self):
        b = ScoredBatch(rewards=np.array([1.0, 2.0]), scores=np.zeros((2, 1)),
                        log_lr=np.log([0.5, 2.0]))
        np.testing.assert_allclose(b.lr, [0.5, 2.0])
        assert b.sample(1).likelihood_ratio == pytest.approx(2.0)
