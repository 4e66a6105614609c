"""Parameterized stochastic models that expose samples together with their score.

A model never owns a parameter. It is handed ``theta`` and a numpy
``Generator`` on every call, so a single model instance can be shared freely
and two calls with the same ``(theta, seed)`` produce the same stream.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np


def as_theta(theta, k: int | None = None) -> np.ndarray:
    """Validate and copy a parameter vector."""
    arr = np.atleast_1d(np.asarray(theta, dtype=np.float64)).copy()
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"theta must be a non-empty vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("theta has non-finite entries")
    if k is not None and arr.size != k:
        raise ValueError(f"theta has length {arr.size}, model expects {k}")
    return arr


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class ScoredSample:
    """One realization: discrete part ``y``, continuous part ``x``, reward and score."""

    y: Any
    x: np.ndarray
    reward: float
    score: np.ndarray
    log_lr: float = 0.0

    @property
    def likelihood_ratio(self) -> float:
        return float(np.exp(self.log_lr))


@dataclass(frozen=True)
class ScoredBatch:
    """Column-oriented batch of scored samples.

    ``scores`` has shape ``(n, k)``. ``log_lr`` holds ``log f/g`` for samples
    drawn from a proposal and is all zeros for nominal draws. ``y`` is left
    to the producing model (``None``, an index array, or a trajectory table).
    """

    rewards: np.ndarray
    scores: np.ndarray
    x: np.ndarray | None = None
    y: Any = None
    log_lr: np.ndarray | None = None

    def __post_init__(self):
        rewards = np.asarray(self.rewards, dtype=np.float64).reshape(-1)
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim == 1:
            scores = scores.reshape(-1, 1)
        if scores.shape[0] != rewards.shape[0]:
            raise ValueError(
                f"{rewards.shape[0]} rewards but {scores.shape[0]} score rows"
            )
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "scores", scores)
        if self.log_lr is not None:
            log_lr = np.asarray(self.log_lr, dtype=np.float64).reshape(-1)
            if log_lr.shape != rewards.shape:
                raise ValueError("log_lr length does not match the batch")
            object.__setattr__(self, "log_lr", log_lr)

    def __len__(self) -> int:
        return self.rewards.shape[0]

    @property
    def n(self) -> int:
        return self.rewards.shape[0]

    @property
    def k(self) -> int:
        return self.scores.shape[1]

    @property
    def lr(self) -> np.ndarray:
        if self.log_lr is None:
            return np.ones(self.n)
        return np.exp(self.log_lr)

    def sample(self, i: int) -> ScoredSample:
        y = self.y[i] if isinstance(self.y, np.ndarray) else None
        x = self.x[i] if self.x is not None else np.empty(0)
        log_lr = 0.0 if self.log_lr is None else float(self.log_lr[i])
        return ScoredSample(y=y, x=x, reward=float(self.rewards[i]),
                            score=self.scores[i].copy(), log_lr=log_lr)

    def __iter__(self):
        for i in range(self.n):
            yield self.sample(i)

    @classmethod
    def from_samples(cls, samples: Sequence[ScoredSample]) -> "ScoredBatch":
        if len(samples) == 0:
            raise ValueError("empty batch")
        lengths = {np.atleast_1d(s.score).size for s in samples}
        if len(lengths) != 1:
            raise ValueError(f"inconsistent score lengths {sorted(lengths)}")
        rewards = np.array([s.reward for s in samples], dtype=np.float64)
        scores = np.array([np.atleast_1d(s.score) for s in samples], dtype=np.float64)
        log_lr = np.array([s.log_lr for s in samples], dtype=np.float64)
        return cls(rewards=rewards, scores=scores, log_lr=log_lr)


def as_batch(samples) -> ScoredBatch:
    """Accept a :class:`ScoredBatch` or any sequence of :class:`ScoredSample`."""
    if isinstance(samples, ScoredBatch):
        batch = samples
    else:
        batch = ScoredBatch.from_samples(list(samples))
    if batch.n == 0:
        raise ValueError("empty batch")
    if not np.all(np.isfinite(batch.rewards)):
        raise ValueError("non-finite reward in batch")
    if not np.all(np.isfinite(batch.scores)):
        raise ValueError("non-finite score in batch")
    return batch


class StochasticModel(abc.ABC):
    """Sampling plus score evaluation for ``f(x, y; theta)``."""

    #: optional bound ``b`` with ``|reward| <= b``; metadata only
    support_bound: float | None = None

    @property
    @abc.abstractmethod
    def k(self) -> int:
        """Parameter dimension."""

    @abc.abstractmethod
    def sample(self, theta, n: int, rng: np.random.Generator) -> ScoredBatch:
        """Draw ``n`` i.i.d. scored samples at ``theta``."""

    def draw(self, theta, rng: np.random.Generator) -> ScoredSample:
        return self.sample(theta, 1, rng).sample(0)


class GaussianMeanFamily(StochasticModel):
    """``Z ~ Normal(theta, 1)`` with reward ``Z``; score is ``Z - theta``."""

    support_bound = None

    @property
    def k(self) -> int:
        return 1

    def sample(self, theta, n, rng):
        theta = as_theta(theta, 1)
        z = theta[0] + rng.standard_normal(n)
        return ScoredBatch(rewards=z, scores=(z - theta[0])[:, None], x=z[:, None])

    def log_density(self, theta, x) -> np.ndarray:
        theta = as_theta(theta, 1)
        z = np.asarray(x, dtype=np.float64).reshape(-1)
        return -0.5 * (z - theta[0]) ** 2 - 0.5 * np.log(2.0 * np.pi)

    def cvar_gradient(self, theta, alpha) -> np.ndarray:
        # location family: CVaR(theta) = theta + CVaR(0)
        return np.ones(1)


def gaussian_mean_family() -> GaussianMeanFamily:
    return GaussianMeanFamily()


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class CategoricalSoftmaxFamily(StochasticModel):
    """Single-step softmax choice among ``m`` outcomes with fixed rewards.

    Category ``j`` is drawn with probability ``softmax(features @ theta)[j]``;
    the reward is ``rewards[j]`` plus optional ``Uniform(-eta, eta)`` noise.
    """

    features: np.ndarray
    rewards: np.ndarray
    eta: float = 0.0
    _k: int = field(init=False, repr=False)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features[:, None]
        rewards = np.asarray(self.rewards, dtype=np.float64).reshape(-1)
        if features.shape[0] < 2:
            raise ValueError("need at least two categories")
        if rewards.shape[0] != features.shape[0]:
            raise ValueError("one reward per feature row required")
        if not np.all(np.isfinite(features)):
            raise ValueError("non-finite features")
        if not np.all(np.isfinite(rewards)):
            raise ValueError("non-finite rewards")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "_k", features.shape[1])

    @property
    def k(self) -> int:
        return self._k

    @property
    def support_bound(self) -> float:
        return float(np.max(np.abs(self.rewards)) + self.eta)

    def probabilities(self, theta) -> np.ndarray:
        return softmax(self.features @ as_theta(theta, self.k))

    def sample(self, theta, n, rng):
        p = self.probabilities(theta)
        u = rng.random(n)
        j = np.minimum(np.searchsorted(np.cumsum(p), u, side="right"), p.size - 1)
        reward = self.rewards[j]
        if self.eta > 0:
            reward = reward + self.eta * rng.uniform(-1.0, 1.0, n)
        scores = self.features[j] - p @ self.features
        return ScoredBatch(rewards=reward, scores=scores, x=reward[:, None], y=j)

    def log_density(self, theta, y) -> np.ndarray:
        # the smoothing noise does not depend on theta
        return np.log(self.probabilities(theta))[np.asarray(y)]

    def mean_gradient(self, theta) -> np.ndarray:
        p = self.probabilities(theta)
        fbar = p @ self.features
        return (p * self.rewards) @ (self.features - fbar)


def categorical_softmax_family(features, rewards, eta: float = 0.0) -> CategoricalSoftmaxFamily:
    return CategoricalSoftmaxFamily(features=features, rewards=rewards, eta=eta)


def score_identity_check(model: StochasticModel, theta, n: int, seed=None) -> np.ndarray:
    """Monte-Carlo mean of the score; should vanish up to O(n^-1/2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    batch = model.sample(theta, n, make_rng(seed))
    return batch.scores.mean(axis=0)
