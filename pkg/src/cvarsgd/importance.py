"""Importance-sampled CVaR gradient estimation and SAA fitting of the proposal."""

from __future__ import annotations

import abc
import warnings
from dataclasses import dataclass, field

import numpy as np

from .gcvar import GradientEstimate, gcvar_estimate, tail_weighted_sum
from .models import ScoredBatch, StochasticModel, as_batch, as_theta, make_rng
from .risk import check_alpha, sorted_tail


class QuantileUndefinedError(ValueError):
    """The weighted empirical CDF never reaches ``alpha`` on this batch."""


class NonFiniteObjectiveWarning(RuntimeWarning):
    pass


class ProposalFamily(abc.ABC):
    """Sampling family ``g(x, y; theta, omega)`` dominating the nominal ``f``.

    ``omega0`` must make ``g == f`` so every likelihood ratio is one there.
    """

    omega0: np.ndarray

    @property
    def omega_dim(self) -> int:
        return int(np.asarray(self.omega0).size)

    @abc.abstractmethod
    def sample(self, theta, omega, n: int, rng: np.random.Generator) -> ScoredBatch:
        """Draw from ``g``; the batch carries ``log_lr = log f/g``."""

    @abc.abstractmethod
    def log_ratio(self, theta, omega, batch: ScoredBatch) -> np.ndarray:
        """``log f/g(.; omega)`` evaluated at samples of ``batch``."""

    @abc.abstractmethod
    def grad_log_g(self, theta, omega, batch: ScoredBatch) -> np.ndarray:
        """``d/d omega log g`` at samples of ``batch``, shape ``(n, omega_dim)``."""


class GaussianShiftProposal(ProposalFamily):
    """``g = Normal(theta + omega, 1)`` for :class:`GaussianMeanFamily`."""

    omega0 = np.zeros(1)

    def sample(self, theta, omega, n, rng):
        theta = as_theta(theta, 1)
        w = float(np.asarray(omega).reshape(-1)[0])
        eps = rng.standard_normal(n)
        z = theta[0] + w + eps
        batch = ScoredBatch(rewards=z, scores=(z - theta[0])[:, None], x=z[:, None])
        return ScoredBatch(rewards=batch.rewards, scores=batch.scores, x=batch.x,
                           log_lr=self.log_ratio(theta, omega, batch))

    def log_ratio(self, theta, omega, batch):
        theta = as_theta(theta, 1)
        w = float(np.asarray(omega).reshape(-1)[0])
        d = batch.x[:, 0] - theta[0]
        return -w * d + 0.5 * w * w

    def grad_log_g(self, theta, omega, batch):
        theta = as_theta(theta, 1)
        w = float(np.asarray(omega).reshape(-1)[0])
        return (batch.x[:, 0] - theta[0] - w)[:, None]


def _is_tail(batch: ScoredBatch, alpha: float):
    lr = batch.lr
    if not np.all(np.isfinite(lr)) or np.any(lr <= 0):
        raise ValueError("likelihood ratios must be finite and positive")
    order = np.argsort(batch.rewards, kind="stable")
    cum = np.cumsum(lr[order]) / batch.n
    hits = np.flatnonzero(cum >= alpha)
    if hits.size == 0:
        raise QuantileUndefinedError(
            f"normalized likelihood mass {cum[-1]:.4g} < alpha={alpha}"
        )
    last = int(hits[0])
    tail = order[: last + 1]
    return tail, float(batch.rewards[order[last]]), lr


def is_empirical_var(samples, alpha: float) -> float:
    """Smallest reward at which the likelihood-weighted CDF reaches ``alpha``."""
    alpha = check_alpha(alpha)
    return _is_tail(as_batch(samples), alpha)[1]


def is_gcvar_estimate(samples, alpha: float) -> GradientEstimate:
    """Importance-sampled CVaR gradient; reduces to :func:`gcvar_estimate` when ``lr == 1``."""
    alpha = check_alpha(alpha)
    batch = as_batch(samples)
    tail, var, lr = _is_tail(batch, alpha)
    coeff = lr[tail] * (batch.rewards[tail] - var)
    grad = tail_weighted_sum(batch.scores, tail, coeff, alpha * batch.n)
    return GradientEstimate(grad=grad, var_used=var, tail_count=int(tail.size), n=batch.n)


def squared_tail_terms(batch: ScoredBatch, alpha: float) -> np.ndarray:
    """``sum_j H_j^2`` per sample, with the crude empirical VaR inside ``H``."""
    alpha = check_alpha(alpha)
    tail, var = sorted_tail(batch.rewards, alpha)
    hsq = np.zeros(batch.n)
    h = batch.scores[tail] * ((batch.rewards[tail] - var) / alpha)[:, None]
    hsq[tail] = np.sum(h * h, axis=1)
    return hsq


def saa_objective(proposal: ProposalFamily, theta, omega, batch: ScoredBatch,
                  hsq: np.ndarray) -> float:
    """Sampled second moment ``mean(sum_j H_j^2 * f/g(omega))`` over nominal samples."""
    mask = hsq > 0
    if not np.any(mask):
        return 0.0
    sub = _subset(batch, mask)
    ratio = np.exp(proposal.log_ratio(theta, omega, sub))
    return float(np.sum(hsq[mask] * ratio) / batch.n)


def _saa_gradient(proposal, theta, omega, sub, hsq_sub, n) -> np.ndarray:
    ratio = np.exp(proposal.log_ratio(theta, omega, sub))
    dlogg = proposal.grad_log_g(theta, omega, sub)
    # d/domega (f/g) = -(f/g) d/domega log g
    return -(hsq_sub * ratio) @ dlogg / n


def _subset(batch: ScoredBatch, mask: np.ndarray) -> ScoredBatch:
    y = batch.y
    if hasattr(y, "subset"):
        y = y.subset(mask)
    elif isinstance(y, np.ndarray):
        y = y[mask]
    return ScoredBatch(
        rewards=batch.rewards[mask],
        scores=batch.scores[mask],
        x=None if batch.x is None else batch.x[mask],
        y=y,
        log_lr=None if batch.log_lr is None else batch.log_lr[mask],
    )


@dataclass(frozen=True)
class SaaFit:
    omega: np.ndarray
    objective_start: float
    objective: float
    accepted_steps: int
    history: list = field(default_factory=list)


def fit_proposal_on_batch(proposal: ProposalFamily, theta, alpha: float,
                          batch: ScoredBatch, gd_steps: int, gd_rate: float,
                          max_halvings: int = 30) -> SaaFit:
    """Backtracking gradient descent on the SAA objective from ``omega0``.

    ``batch`` must be drawn from the nominal distribution.
    """
    if gd_steps < 0:
        raise ValueError("gd_steps must be >= 0")
    if gd_rate <= 0:
        raise ValueError("gd_rate must be positive")
    hsq = squared_tail_terms(batch, alpha)
    mask = hsq > 0
    sub = _subset(batch, mask)
    hsq_sub = hsq[mask]

    omega = np.asarray(proposal.omega0, dtype=np.float64).copy()
    obj = saa_objective(proposal, theta, omega, batch, hsq)
    start = obj
    history = [(omega.copy(), obj)]
    accepted = 0
    if not np.any(mask):
        return SaaFit(omega, start, obj, 0, history)
    for _ in range(gd_steps):
        g = _saa_gradient(proposal, theta, omega, sub, hsq_sub, batch.n)
        if not np.all(np.isfinite(g)):
            warnings.warn("non-finite SAA gradient; stopping at last finite iterate",
                          NonFiniteObjectiveWarning, stacklevel=2)
            break
        if not np.any(g):
            break
        rate = gd_rate
        moved = False
        for _ in range(max_halvings + 1):
            cand = omega - rate * g
            with np.errstate(over="ignore"):
                cand_obj = saa_objective(proposal, theta, cand, batch, hsq)
            if np.isfinite(cand_obj) and cand_obj <= obj:
                omega, obj, moved = cand, cand_obj, True
                break
            rate *= 0.5
        if not moved:
            break
        accepted += 1
        history.append((omega.copy(), obj))
    if not np.isfinite(obj):
        warnings.warn("SAA objective is not finite", NonFiniteObjectiveWarning, stacklevel=2)
    return SaaFit(omega, start, obj, accepted, history)


def fit_proposal_saa(model: StochasticModel, proposal: ProposalFamily, theta,
                     alpha: float, n_saa: int, gd_steps: int, gd_rate: float,
                     seed=None) -> SaaFit:
    """Draw ``n_saa`` nominal samples and fit ``omega`` on them."""
    batch = model.sample(theta, n_saa, make_rng(seed))
    return fit_proposal_on_batch(proposal, theta, alpha, batch, gd_steps, gd_rate)


def variance_comparison(model: StochasticModel, proposal: ProposalFamily, theta,
                        alpha: float, omega, n: int, replications: int, seed=None):
    """Per-component variance of crude vs importance-sampled CVaR gradients."""
    if replications < 2:
        raise ValueError("replications must be >= 2")
    rng = make_rng(seed)
    crude = np.array([gcvar_estimate(model.sample(theta, n, rng), alpha).grad
                      for _ in range(replications)])
    weighted = np.array([is_gcvar_estimate(proposal.sample(theta, omega, n, rng), alpha).grad
                         for _ in range(replications)])
    return crude.var(axis=0, ddof=1), weighted.var(axis=0, ddof=1)
