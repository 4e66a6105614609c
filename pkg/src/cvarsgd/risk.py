"""Empirical CDF, VaR and CVaR of a reward batch (lower tail)."""

from __future__ import annotations

import math

import numpy as np


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def _rewards(batch) -> np.ndarray:
    r = np.asarray(getattr(batch, "rewards", batch), dtype=np.float64).reshape(-1)
    if r.size == 0:
        raise ValueError("empty reward batch")
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite reward")
    return r


def tail_count(alpha: float, n: int) -> int:
    """Smallest ``m`` with ``m / n >= alpha``, i.e. ``ceil(alpha * n)``.

    Computed against the division ``m / n`` rather than the product
    ``alpha * n`` so that it agrees exactly with a cumulative-weight search
    over unit weights (``0.07 * 100`` rounds up to ``7.000000000000001``).
    """
    alpha = check_alpha(alpha)
    if n < 1:
        raise ValueError("n must be >= 1")
    m = min(max(1, math.ceil(alpha * n)), n)
    while m > 1 and (m - 1) / n >= alpha:
        m -= 1
    while m < n and m / n < alpha:
        m += 1
    return m


def sorted_tail(rewards: np.ndarray, alpha: float) -> tuple[np.ndarray, float]:
    """Indices of the ``ceil(alpha n)`` smallest rewards and the empirical VaR.

    Ties are broken by a stable sort, so among equal rewards the earlier
    samples enter the tail first.
    """
    order = np.argsort(rewards, kind="stable")
    m = tail_count(alpha, rewards.size)
    tail = order[:m]
    return tail, float(rewards[order[m - 1]])


def empirical_cdf(batch, z: float) -> float:
    r = _rewards(batch)
    return np.count_nonzero(r <= z) / r.size


def empirical_var(batch, alpha: float) -> float:
    """The ``ceil(alpha N)``-th smallest reward."""
    r = _rewards(batch)
    return sorted_tail(r, alpha)[1]


def empirical_cvar(batch, alpha: float) -> float:
    """Mean of the ``ceil(alpha N)`` smallest rewards."""
    r = _rewards(batch)
    tail, _ = sorted_tail(r, alpha)
    return float(np.sort(r[tail], kind="stable").sum() / tail.size)
