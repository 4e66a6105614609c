"""Projected stochastic gradient ascent on the CVaR (CVaRSGD).

The update is ``theta <- project(theta + step(i) * Delta_i)`` where
``Delta_i`` is a gradient estimate from a fresh batch of ``batch(i)``
samples. With ``step(i) = eps0 / i`` we have ``sum step = inf`` and
``sum step^2 < inf``; a batch size growing like ``log(i)^4`` keeps the
accumulated estimator bias summable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gcvar import GradientEstimate, gcvar_estimate, plain_lr_estimate
from .importance import ProposalFamily, fit_proposal_saa, is_gcvar_estimate
from .models import StochasticModel, as_theta, make_rng
from .risk import check_alpha, empirical_cvar


@dataclass(frozen=True)
class ProjectionBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("need lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, k: int, low: float, high: float) -> "ProjectionBox":
        return cls(np.full(k, float(low)), np.full(k, float(high)))

    @property
    def k(self) -> int:
        return self.lower.size

    def contains(self, theta) -> bool:
        theta = np.asarray(theta)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))


def project(box: ProjectionBox, theta) -> np.ndarray:
    theta = as_theta(theta)
    if theta.size != box.k:
        raise ValueError(f"theta has length {theta.size}, box has {box.k}")
    return np.clip(theta, box.lower, box.upper)


@dataclass(frozen=True)
class Schedules:
    """Step size and batch size as functions of the 1-based iteration index.

    ``step_decay='harmonic'`` gives ``eps0 / i``; ``'constant'`` gives ``eps0``.
    ``batch_kind='log4'`` gives ``max(n_min, ceil(log(i + 1)^4))``;
    ``'fixed'`` gives ``n_min``.
    """

    eps0: float = 1.0
    step_decay: str = "harmonic"
    batch_kind: str = "log4"
    n_min: int = 8

    def __post_init__(self):
        if self.eps0 <= 0:
            raise ValueError("eps0 must be positive")
        if self.step_decay not in ("harmonic", "constant"):
            raise ValueError(f"unknown step_decay {self.step_decay!r}")
        if self.batch_kind not in ("log4", "fixed"):
            raise ValueError(f"unknown batch_kind {self.batch_kind!r}")
        if self.n_min < 1:
            raise ValueError("n_min must be >= 1")

    @classmethod
    def default(cls, alpha: float, eps0: float = 1.0, n_min: int | None = None) -> "Schedules":
        alpha = check_alpha(alpha)
        if n_min is None:
            n_min = math.ceil(4.0 / alpha)
        return cls(eps0=eps0, step_decay="harmonic", batch_kind="log4", n_min=n_min)

    @classmethod
    def fixed(cls, step: float, batch: int, decay: bool = False) -> "Schedules":
        return cls(eps0=step, step_decay="harmonic" if decay else "constant",
                   batch_kind="fixed", n_min=batch)

    def step(self, i: int) -> float:
        if i < 1:
            raise ValueError("iterations are 1-based")
        return self.eps0 / i if self.step_decay == "harmonic" else self.eps0

    def batch(self, i: int) -> int:
        if i < 1:
            raise ValueError("iterations are 1-based")
        if self.batch_kind == "fixed":
            return self.n_min
        return max(self.n_min, math.ceil(math.log(i + 1) ** 4))


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    theta: np.ndarray
    grad: np.ndarray
    var_used: float
    tail_count: int
    n: int
    mean_return: float
    cvar_return: float
    omega: np.ndarray | None
    wall_time: float


@dataclass
class RunTrace:
    records: list[IterationRecord] = field(default_factory=list)
    final_theta: np.ndarray | None = None
    failed_iteration: int | None = None
    error: str | None = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])


ESTIMATORS = ("crude", "is", "plain")


def _batch_stats(batch, alpha: float) -> tuple[float, float]:
    if batch.log_lr is None or not np.any(batch.log_lr):
        return float(batch.rewards.mean()), empirical_cvar(batch.rewards, alpha)
    # likelihood-weighted estimates for proposal batches
    lr = batch.lr
    mean = float(np.sum(lr * batch.rewards) / batch.n)
    order = np.argsort(batch.rewards, kind="stable")
    cum = np.cumsum(lr[order]) / batch.n
    hits = np.flatnonzero(cum >= alpha)
    last = int(hits[0]) if hits.size else batch.n - 1
    tail = order[: last + 1]
    mass = float(np.sum(lr[tail]) / batch.n)
    cvar = float(np.sum(lr[tail] * batch.rewards[tail]) / batch.n / mass)
    return mean, cvar


def cvarsgd(model: StochasticModel, theta0, alpha: float, box: ProjectionBox,
            schedules: Schedules, iterations: int, seed=None, *,
            estimator: str = "crude", proposal: ProposalFamily | None = None,
            refit_period: int = 50, saa_samples: int = 10_000, saa_steps: int = 100,
            saa_rate: float = 1.0, on_record: Callable[[IterationRecord], None] | None = None,
            ) -> RunTrace:
    """Run projected stochastic gradient ascent on the alpha-CVaR.

    ``estimator`` is ``'crude'`` (GCVaR), ``'is'`` (importance-sampled GCVaR
    with ``omega`` refit by SAA every ``refit_period`` iterations) or
    ``'plain'`` (mean-return policy gradient, the risk-neutral baseline).
    An estimator failure ends the run early; the trace keeps what was done
    and records the failing iteration.
    """
    alpha = check_alpha(alpha)
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")
    if estimator == "is":
        if proposal is None:
            raise ValueError("the 'is' estimator needs a proposal family")
        if refit_period < 1:
            raise ValueError("refit_period must be >= 1")
    rng = make_rng(seed)
    theta = project(box, as_theta(theta0, model.k))
    trace = RunTrace()
    omega = None
    start = time.perf_counter()
    for i in range(1, iterations + 1):
        n_i = schedules.batch(i)
        try:
            if estimator == "is":
                if (i - 1) % refit_period == 0:
                    fit = fit_proposal_saa(model, proposal, theta, alpha, saa_samples,
                                           saa_steps, saa_rate, seed=rng)
                    omega = fit.omega
                batch = proposal.sample(theta, omega, n_i, rng)
                est: GradientEstimate = is_gcvar_estimate(batch, alpha)
            else:
                batch = model.sample(theta, n_i, rng)
                if estimator == "crude":
                    est = gcvar_estimate(batch, alpha)
                else:
                    est = plain_lr_estimate(batch)
        except ValueError as exc:
            trace.failed_iteration = i
            trace.error = f"{type(exc).__name__}: {exc}"
            break
        mean, cvar = _batch_stats(batch, alpha)
        rec = IterationRecord(
            iteration=i, theta=theta.copy(), grad=est.grad, var_used=est.var_used,
            tail_count=est.tail_count, n=est.n, mean_return=mean, cvar_return=cvar,
            omega=None if omega is None else np.array(omega, dtype=np.float64),
            wall_time=time.perf_counter() - start,
        )
        trace.records.append(rec)
        if on_record is not None:
            on_record(rec)
        theta = project(box, theta + schedules.step(i) * est.grad)
    trace.final_theta = theta
    return trace


@dataclass(frozen=True)
class Evaluation:
    mean: float
    cvar: float
    counts: np.ndarray
    edges: np.ndarray
    rewards: np.ndarray = field(repr=False)


def evaluate_policy(model: StochasticModel, theta, alpha: float, n_eval: int,
                    seed=None, bins=50) -> Evaluation:
    """Monte-Carlo mean, empirical CVaR and reward histogram at ``theta``.

    ``bins`` may be a bin count or explicit edges (use edges to make
    histograms from different runs comparable).
    """
    alpha = check_alpha(alpha)
    if n_eval < math.ceil(1.0 / alpha):
        raise ValueError(f"n_eval must be >= ceil(1/alpha) = {math.ceil(1.0 / alpha)}")
    batch = model.sample(theta, n_eval, make_rng(seed))
    r = batch.rewards
    if isinstance(bins, (int, np.integer)):
        lo, hi = float(r.min()), float(r.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=np.float64)
    counts, edges = np.histogram(r, bins=edges)
    return Evaluation(mean=float(r.mean()), cvar=empirical_cvar(r, alpha),
                      counts=counts, edges=edges, rewards=r)
