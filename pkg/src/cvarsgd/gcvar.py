"""Likelihood-ratio gradient estimators for the CVaR and the mean."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ScoredBatch, StochasticModel, as_batch, as_theta, make_rng
from .risk import check_alpha, sorted_tail


@dataclass(frozen=True)
class GradientEstimate:
    grad: np.ndarray
    var_used: float
    tail_count: int
    n: int


def tail_weighted_sum(scores: np.ndarray, tail: np.ndarray, coeff: np.ndarray,
                      normalizer: float) -> np.ndarray:
    """``sum_i coeff_i * scores[tail_i] / normalizer`` in a fixed order."""
    contrib = coeff[:, None] * scores[tail]
    return contrib.sum(axis=0) / normalizer


def _prepare(samples, alpha):
    alpha = check_alpha(alpha)
    batch = as_batch(samples)
    tail, var = sorted_tail(batch.rewards, alpha)
    return batch, alpha, tail, var


def gcvar_estimate(samples, alpha: float) -> GradientEstimate:
    """CVaR gradient with the empirical VaR as baseline.

    ``grad = 1/(alpha N) * sum_{tail} score_i * (r_i - var)`` where the tail
    holds the ``ceil(alpha N)`` smallest rewards.
    """
    batch, alpha, tail, var = _prepare(samples, alpha)
    coeff = batch.rewards[tail] - var
    grad = tail_weighted_sum(batch.scores, tail, coeff, alpha * batch.n)
    return GradientEstimate(grad=grad, var_used=var, tail_count=int(tail.size), n=batch.n)


def naive_tail_lr_estimate(samples, alpha: float) -> GradientEstimate:
    """Tail-restricted LR estimate without the VaR baseline (inconsistent)."""
    batch, alpha, tail, var = _prepare(samples, alpha)
    coeff = batch.rewards[tail]
    grad = tail_weighted_sum(batch.scores, tail, coeff, alpha * batch.n)
    return GradientEstimate(grad=grad, var_used=var, tail_count=int(tail.size), n=batch.n)


def plain_lr_estimate(samples) -> GradientEstimate:
    """Gradient of ``E[R]`` with the batch-mean reward as baseline."""
    batch = as_batch(samples)
    rbar = batch.rewards.mean()
    idx = np.arange(batch.n)
    grad = tail_weighted_sum(batch.scores, idx, batch.rewards - rbar, batch.n)
    return GradientEstimate(grad=grad, var_used=float(rbar), tail_count=batch.n, n=batch.n)


@dataclass(frozen=True)
class BiasRow:
    n: int
    mean_estimate: np.ndarray
    bias: float
    mean_abs_error: float
    std_error: float


def bias_study(model: StochasticModel, theta, alpha: float, batch_sizes,
               replications: int, seed=None, truth=None,
               estimator=gcvar_estimate) -> list[BiasRow]:
    """Empirical bias of a CVaR gradient estimator across batch sizes.

    ``bias`` is ``|mean estimate - truth|`` (max over components) and
    ``std_error`` the Monte-Carlo standard error of that mean, so rows with
    ``bias`` well below ``std_error`` are noise-dominated.
    """
    alpha = check_alpha(alpha)
    if replications < 1:
        raise ValueError("replications must be >= 1")
    theta = as_theta(theta, model.k)
    if truth is None:
        if not hasattr(model, "cvar_gradient"):
            raise ValueError("model has no analytic gradient; pass truth=")
        truth = model.cvar_gradient(theta, alpha)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    rng = make_rng(seed)
    rows = []
    for n in batch_sizes:
        est = np.array([estimator(model.sample(theta, int(n), rng), alpha).grad
                        for _ in range(replications)])
        mean = est.mean(axis=0)
        if replications > 1:
            se = float(np.max(est.std(axis=0, ddof=1)) / np.sqrt(replications))
        else:
            se = float("nan")
        rows.append(BiasRow(
            n=int(n),
            mean_estimate=mean,
            bias=float(np.max(np.abs(mean - truth))),
            mean_abs_error=float(np.max(np.abs(est - truth).mean(axis=0))),
            std_error=se,
        ))
    return rows


def loglog_slope(ns, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(ns)``."""
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.asarray(values, dtype=np.float64))
    return float(np.polyfit(x, y, 1)[0])
