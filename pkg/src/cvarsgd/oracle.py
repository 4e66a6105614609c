"""Ground truth for small problems: exact return laws, exact CVaR, FD gradients."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .mdp import EpisodicMdp, SoftmaxPolicy
from .models import as_theta
from .risk import check_alpha

_MASS_TOL = 1e-12


class EnumerationBudgetError(ValueError):
    pass


class AtomCrossingWarning(RuntimeWarning):
    """The VaR atom differs between ``theta - h`` and ``theta + h``."""


@dataclass(frozen=True)
class ExactDistribution:
    """Discrete law of the return, optionally smoothed by ``Uniform(-eta, eta)``."""

    values: np.ndarray
    probs: np.ndarray
    eta: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        p = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if v.shape != p.shape or v.size == 0:
            raise ValueError("values and probs must be equal-length, non-empty")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to one (got {p.sum()!r})")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        uniq, inv = np.unique(v, return_inverse=True)
        merged = np.zeros(uniq.size)
        np.add.at(merged, inv, p)
        keep = merged > 0
        object.__setattr__(self, "values", uniq[keep])
        object.__setattr__(self, "probs", merged[keep])

    @property
    def mean(self) -> float:
        return float(self.values @ self.probs)

    @property
    def total_mass(self) -> float:
        return float(self.probs.sum())

    def cdf(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.eta == 0:
            return (self.probs[None, :] * (self.values[None, :] <= z.reshape(-1, 1))).sum(axis=1).reshape(z.shape)
        lo = self.values - self.eta
        frac = np.clip((z.reshape(-1, 1) - lo[None, :]) / (2 * self.eta), 0.0, 1.0)
        return (frac * self.probs[None, :]).sum(axis=1).reshape(z.shape)


def enumerate_mdp(mdp: EpisodicMdp, policy: SoftmaxPolicy, budget: int = 10**6) -> ExactDistribution:
    """Exhaustive depth-first enumeration of (action, reward atom, successor) branches."""
    pi = policy.probs()
    P = mdp.transitions
    rv, rp = mdp.reward_values, mdp.reward_probs
    values: list[float] = []
    probs: list[float] = []

    def visit(s: int, t: int, total: float, prob: float):
        if s == mdp.terminal or t == mdp.t_max:
            values.append(total)
            probs.append(prob)
            if len(values) > budget:
                raise EnumerationBudgetError(f"more than {budget} trajectories")
            return
        for a in np.flatnonzero(pi[s] > 0):
            pa = prob * pi[s, a]
            for m in np.flatnonzero(rp[s, a] > 0):
                pr = pa * rp[s, a, m]
                r = total + rv[s, a, m]
                for s2 in np.flatnonzero(P[s, a] > 0):
                    visit(int(s2), t + 1, r, pr * P[s, a, s2])

    for s0 in np.flatnonzero(mdp.initial > 0):
        visit(int(s0), 0, 0.0, float(mdp.initial[s0]))
    return ExactDistribution(np.array(values), np.array(probs), eta=mdp.eta)


def count_trajectories(mdp: EpisodicMdp) -> int:
    """Upper bound on the number of enumerated branches (all actions allowed)."""
    atoms = (mdp.reward_probs > 0).sum(axis=2)
    succ = mdp.transitions > 0
    counts = [1] * mdp.n_states
    for _ in range(mdp.t_max):
        counts = [1 if s == mdp.terminal else
                  sum(int(atoms[s, a]) * sum(counts[s2] for s2 in np.flatnonzero(succ[s, a]))
                      for a in range(mdp.n_actions))
                  for s in range(mdp.n_states)]
    return sum(counts[s] for s in np.flatnonzero(mdp.initial))


def _atom_var_cvar(values, probs, alpha):
    cum = np.cumsum(probs)
    idx = int(np.flatnonzero(cum >= alpha - _MASS_TOL)[0])
    var = float(values[idx])
    below = cum[idx - 1] if idx > 0 else 0.0
    tail_sum = float(values[:idx] @ probs[:idx]) + (alpha - below) * var
    return var, tail_sum / alpha


def _smoothed_var_cvar(values, probs, eta, alpha):
    lo, hi = values - eta, values + eta
    width = 2.0 * eta
    knots = np.unique(np.concatenate([lo, hi]))

    def cdf(z):
        return float(np.sum(probs * np.clip((z - lo) / width, 0.0, 1.0)))

    F = np.array([cdf(z) for z in knots])
    j = int(np.flatnonzero(F >= alpha - _MASS_TOL)[0])
    if j == 0:
        var = float(knots[0])
    else:
        # CDF is linear between consecutive knots
        z0, z1, F0, F1 = knots[j - 1], knots[j], F[j - 1], F[j]
        var = float(z0 + (alpha - F0) / (F1 - F0) * (z1 - z0)) if F1 > F0 else float(z1)
    top = np.clip(var, lo, hi)
    # mass below var times the mean of that part of each uniform
    partial = (top - lo) / width * 0.5 * (top + lo)
    return var, float(np.sum(probs * partial)) / alpha


def exact_var_cvar(dist: ExactDistribution, alpha: float) -> tuple[float, float]:
    """VaR ``inf{z: F(z) >= alpha}`` and the mean of the lowest ``alpha`` mass.

    For atoms, the VaR atom is weighted fractionally so that exactly ``alpha``
    mass is averaged.
    """
    alpha = check_alpha(alpha)
    if dist.eta == 0 or np.any(dist.values - dist.eta == dist.values + dist.eta):
        # noise below floating-point resolution of the atoms
        return _atom_var_cvar(dist.values, dist.probs, alpha)
    return _smoothed_var_cvar(dist.values, dist.probs, dist.eta, alpha)


def exact_cvar(mdp: EpisodicMdp, features, theta, alpha: float) -> float:
    return exact_var_cvar(enumerate_mdp(mdp, SoftmaxPolicy(features, theta)), alpha)[1]


def exact_mean(mdp: EpisodicMdp, features, theta) -> float:
    return enumerate_mdp(mdp, SoftmaxPolicy(features, theta)).mean


def fd_cvar_gradient(mdp: EpisodicMdp, features, theta, alpha: float, h: float = 1e-4,
                     budget: int = 10**6) -> np.ndarray:
    """Central differences of the exact CVaR in each coordinate of ``theta``."""
    features = np.asarray(getattr(features, "features", features), dtype=np.float64)
    theta = as_theta(theta, features.shape[2])
    grad = np.zeros(theta.size)
    for j in range(theta.size):
        e = np.zeros(theta.size)
        e[j] = h
        dp = enumerate_mdp(mdp, SoftmaxPolicy(features, theta + e), budget)
        dm = enumerate_mdp(mdp, SoftmaxPolicy(features, theta - e), budget)
        vp, cp = exact_var_cvar(dp, alpha)
        vm, cm = exact_var_cvar(dm, alpha)
        if mdp.eta == 0 and vp != vm:
            warnings.warn(f"VaR atom changes across theta[{j}] +/- h; CVaR is not smooth here",
                          AtomCrossingWarning, stacklevel=2)
        grad[j] = (cp - cm) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class GaussianTruth:
    cvar: float
    var: float
    grad: float
    naive_limit: float


def gaussian_truth(theta: float, alpha: float) -> GaussianTruth:
    """Closed forms for ``Z ~ Normal(theta, 1)`` in the lower tail.

    ``cvar = theta - pdf(z_a) / a`` and the CVaR gradient is 1. Without the
    VaR baseline the tail-restricted LR estimator converges instead to
    ``E[(Z - theta) Z | Z <= VaR] = 1 - VaR * pdf(z_a) / a``, which at
    ``a = 0.5`` is ``1 - sqrt(2/pi) * theta``.
    """
    alpha = check_alpha(alpha)
    theta = float(np.asarray(theta).reshape(-1)[0])
    z = float(norm.ppf(alpha))
    phi = float(norm.pdf(z))
    var = theta + z
    return GaussianTruth(cvar=theta - phi / alpha, var=var, grad=1.0,
                         naive_limit=1.0 - var * phi / alpha)
