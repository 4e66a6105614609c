"""Risky/safe chain MDPs small enough for exact enumeration.

States ``0 .. horizon-1`` are decision stages and state ``horizon`` is
terminal. At every stage the agent picks action 0 (safe) or 1 (risky); each
draws its reward from its own discrete support, then the chain advances one
stage, or with probability ``slip_prob`` jumps straight to the terminal
state. The feature of (stage ``s``, risky) is the unit vector ``e_s`` and the
safe action has zero features, so ``theta[s]`` is the logit preference for
risk at stage ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mdp import EpisodicMdp, MdpModel
from ..oracle import EnumerationBudgetError, count_trajectories

SAFE, RISKY = 0, 1
ENUMERATION_BUDGET = 10**6


@dataclass(frozen=True)
class ChainMdpConfig:
    horizon: int = 1
    safe_values: tuple = (1.0,)
    safe_probs: tuple = (1.0,)
    risky_values: tuple = (0.0, 3.0)
    risky_probs: tuple = (0.5, 0.5)
    slip_prob: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        for vals, probs in ((self.safe_values, self.safe_probs),
                            (self.risky_values, self.risky_probs)):
            if len(vals) != len(probs) or len(vals) == 0:
                raise ValueError("each reward support needs matching values and probs")
            if abs(sum(probs) - 1.0) > 1e-12 or min(probs) < 0:
                raise ValueError("reward probabilities must sum to one")
        if not 0.0 <= self.slip_prob < 1.0:
            raise ValueError("slip_prob must lie in [0, 1)")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")


@dataclass(frozen=True)
class ChainProblem:
    config: ChainMdpConfig
    mdp: EpisodicMdp
    features: np.ndarray

    @property
    def k(self) -> int:
        return self.features.shape[2]

    def model(self) -> MdpModel:
        return MdpModel(self.mdp, self.features)


def build_chain(config: ChainMdpConfig | None = None, budget: int = ENUMERATION_BUDGET) -> ChainProblem:
    config = config or ChainMdpConfig()
    H = config.horizon
    S, A = H + 1, 2
    term = H
    M = max(len(config.safe_values), len(config.risky_values))

    P = np.zeros((S, A, S))
    rv = np.zeros((S, A, M))
    rp = np.zeros((S, A, M))
    for s in range(H):
        for a in (SAFE, RISKY):
            nxt = s + 1
            P[s, a, nxt] += 1.0 - config.slip_prob
            P[s, a, term] += config.slip_prob
        n = len(config.safe_values)
        rv[s, SAFE, :n], rp[s, SAFE, :n] = config.safe_values, config.safe_probs
        n = len(config.risky_values)
        rv[s, RISKY, :n], rp[s, RISKY, :n] = config.risky_values, config.risky_probs
    P[term, :, term] = 1.0
    rp[term, :, 0] = 1.0
    initial = np.zeros(S)
    initial[0] = 1.0
    mdp = EpisodicMdp(P, rv, rp, initial, terminal=term, t_max=H, eta=config.eta)

    features = np.zeros((S, A, H))
    for s in range(H):
        features[s, RISKY, s] = 1.0
    count = count_trajectories(mdp)
    if count > budget:
        raise EnumerationBudgetError(f"chain has {count} trajectories, budget {budget}")
    return ChainProblem(config, mdp, features)
