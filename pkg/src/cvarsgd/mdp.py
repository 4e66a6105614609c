"""Episodic MDPs with dense tables, softmax policies and value-tilted rollouts.

Trajectories are simulated in batches: every active episode advances one
step per loop iteration, so the Python overhead is per time step rather than
per episode. The trajectory score only involves the policy,

    d/dtheta log P(trajectory) = sum_t phi(s_t, a_t) - sum_a pi(a | s_t) phi(s_t, a),

because neither transitions nor rewards depend on ``theta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .importance import ProposalFamily
from .models import ScoredBatch, StochasticModel, as_theta, softmax

_ROW_TOL = 1e-12


@dataclass(frozen=True)
class EpisodicMdp:
    """Finite episodic MDP.

    ``transitions[s, a, s']`` is row-stochastic. ``reward_values`` and
    ``reward_probs`` have shape ``(S, A, M)``; padded atoms carry probability
    zero. ``eta > 0`` adds a single ``Uniform(-eta, eta)`` draw to each
    episode's total reward.
    """

    transitions: np.ndarray
    reward_values: np.ndarray
    reward_probs: np.ndarray
    initial: np.ndarray
    terminal: int
    t_max: int
    eta: float = 0.0

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=np.float64)
        rv = np.asarray(self.reward_values, dtype=np.float64)
        rp = np.asarray(self.reward_probs, dtype=np.float64)
        z0 = np.asarray(self.initial, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError("transitions must have shape (S, A, S)")
        S, A, _ = P.shape
        if rv.ndim == 2:
            rv, rp = rv[..., None], rp[..., None]
        if rv.shape != rp.shape or rv.shape[:2] != (S, A):
            raise ValueError("reward tables must have shape (S, A, M)")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > _ROW_TOL):
            raise ValueError("transition rows must be probability vectors")
        if np.any(rp < 0) or np.any(np.abs(rp.sum(axis=2) - 1.0) > _ROW_TOL):
            raise ValueError("reward distributions must sum to one")
        if not np.all(np.isfinite(rv)):
            raise ValueError("non-finite reward values")
        if z0.shape != (S,) or np.any(z0 < 0) or abs(z0.sum() - 1.0) > _ROW_TOL:
            raise ValueError("initial distribution must be a probability vector over S")
        if not 0 <= self.terminal < S:
            raise ValueError("terminal state out of range")
        if not np.all(P[self.terminal, :, self.terminal] == 1.0):
            raise ValueError("terminal state must be absorbing")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "reward_values", rv)
        object.__setattr__(self, "reward_probs", rp)
        object.__setattr__(self, "initial", z0)

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]


@dataclass(frozen=True)
class SoftmaxPolicy:
    """Markov softmax policy ``pi(a|s) ∝ exp(phi(s, a) . theta)``."""

    features: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.features, dtype=np.float64)
        if F.ndim != 3:
            raise ValueError("features must have shape (S, A, k)")
        if not np.all(np.isfinite(F)):
            raise ValueError("non-finite features")
        object.__setattr__(self, "features", F)
        object.__setattr__(self, "theta", as_theta(self.theta, F.shape[2]))

    @property
    def k(self) -> int:
        return self.features.shape[2]

    def with_theta(self, theta) -> "SoftmaxPolicy":
        return SoftmaxPolicy(self.features, theta)

    def logits(self) -> np.ndarray:
        return self.features @ self.theta

    def probs(self) -> np.ndarray:
        return softmax(self.logits())

    def mean_features(self) -> np.ndarray:
        return np.einsum("sa,sak->sk", self.probs(), self.features)

    def log_prob(self, state: int, action: int) -> float:
        logits = self.features[state] @ self.theta
        m = logits.max()
        return float(logits[action] - m - np.log(np.exp(logits - m).sum()))

    def value_heuristic(self) -> np.ndarray:
        """``max_a phi(s, a) . theta`` for every state."""
        return self.logits().max(axis=1)


def softmax_value_heuristic(policy: SoftmaxPolicy, state: int) -> float:
    return float(np.max(policy.features[state] @ policy.theta))


def tilted_transitions(mdp: EpisodicMdp, value: np.ndarray, omega: float) -> np.ndarray:
    """``f(s'|s,a) exp(-omega V(s'))`` renormalized over ``s'``."""
    P = mdp.transitions
    value = np.asarray(value, dtype=np.float64)
    if omega == 0.0:
        return P.copy()
    with np.errstate(divide="ignore"):
        logw = np.log(P) - omega * value[None, None, :]
    logw -= logw.max(axis=2, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=2, keepdims=True)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    total_reward: float
    score: np.ndarray
    log_lr: float

    @property
    def length(self) -> int:
        return self.actions.size


@dataclass(frozen=True)
class TrajectoryBatch:
    """Padded trajectory tables; ``-1`` marks steps past the episode end."""

    states: np.ndarray
    actions: np.ndarray
    step_rewards: np.ndarray
    lengths: np.ndarray
    total_reward: np.ndarray
    scores: np.ndarray
    log_lr: np.ndarray

    def __len__(self) -> int:
        return self.lengths.size

    def subset(self, mask) -> "TrajectoryBatch":
        return TrajectoryBatch(*(getattr(self, f)[mask] for f in self.__dataclass_fields__))

    def trajectory(self, i: int) -> Trajectory:
        L = int(self.lengths[i])
        return Trajectory(
            states=self.states[i, : L + 1].copy(),
            actions=self.actions[i, :L].copy(),
            rewards=self.step_rewards[i, :L].copy(),
            total_reward=float(self.total_reward[i]),
            score=self.scores[i].copy(),
            log_lr=float(self.log_lr[i]),
        )


def _sample_rows(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = (cdf_rows < u[:, None]).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def simulate_batch(mdp: EpisodicMdp, policy: SoftmaxPolicy, n: int,
                   rng: np.random.Generator, omega: float = 0.0,
                   value: np.ndarray | None = None) -> TrajectoryBatch:
    """Roll out ``n`` episodes under the nominal or value-tilted kernel.

    With ``omega != 0`` transitions follow :func:`tilted_transitions` with
    ``value`` (defaults to the policy's own max-logit heuristic), and
    ``log_lr`` accumulates ``log f - log f_tilted`` over realized steps.
    """
    if policy.features.shape[:2] != mdp.transitions.shape[:2]:
        raise ValueError("policy features do not match the MDP's (S, A)")
    S, A = mdp.n_states, mdp.n_actions
    T = mdp.t_max
    if value is None:
        value = policy.value_heuristic()
    P = mdp.transitions
    Q = tilted_transitions(mdp, value, omega) if omega != 0.0 else P
    with np.errstate(divide="ignore"):
        step_log_lr = np.where(P > 0, np.log(P) - np.log(np.where(Q > 0, Q, 1.0)), 0.0)
    q_cdf = np.cumsum(Q, axis=2)
    r_cdf = np.cumsum(mdp.reward_probs, axis=2)
    pi = policy.probs()
    pi_cdf = np.cumsum(pi, axis=1)
    fbar = np.einsum("sa,sak->sk", pi, policy.features)

    states = np.full((n, T + 1), -1, dtype=np.int64)
    actions = np.full((n, T), -1, dtype=np.int64)
    step_rewards = np.zeros((n, T))
    scores = np.zeros((n, policy.k))
    log_lr = np.zeros(n)
    lengths = np.zeros(n, dtype=np.int64)

    states[:, 0] = _sample_rows(np.broadcast_to(np.cumsum(mdp.initial), (n, S)), rng.random(n))
    for t in range(T):
        s = states[:, t]
        # padded entries (-1) belong to finished episodes
        active = np.flatnonzero((s >= 0) & (s != mdp.terminal))
        if active.size == 0:
            break
        s = s[active]
        a = _sample_rows(pi_cdf[s], rng.random(active.size))
        atom = _sample_rows(r_cdf[s, a], rng.random(active.size))
        s_next = _sample_rows(q_cdf[s, a], rng.random(active.size))
        actions[active, t] = a
        step_rewards[active, t] = mdp.reward_values[s, a, atom]
        states[active, t + 1] = s_next
        scores[active] += policy.features[s, a] - fbar[s]
        log_lr[active] += step_log_lr[s, a, s_next]
        lengths[active] += 1
    total = step_rewards.sum(axis=1)
    if mdp.eta > 0:
        total = total + mdp.eta * rng.uniform(-1.0, 1.0, n)
    return TrajectoryBatch(states, actions, step_rewards, lengths, total, scores, log_lr)


def simulate(mdp: EpisodicMdp, policy: SoftmaxPolicy, seed=None, omega: float = 0.0,
             value: np.ndarray | None = None) -> Trajectory:
    """One episode; see :func:`simulate_batch`."""
    rng = np.random.default_rng(seed)
    return simulate_batch(mdp, policy, 1, rng, omega=omega, value=value).trajectory(0)


def trajectory_score(policy: SoftmaxPolicy, trajectory: Trajectory) -> np.ndarray:
    s = np.asarray(trajectory.states[: trajectory.length], dtype=np.int64)
    a = np.asarray(trajectory.actions, dtype=np.int64)
    if a.size and (s.max() >= policy.features.shape[0] or a.max() >= policy.features.shape[1]):
        raise ValueError("trajectory indexes outside the policy's feature table")
    fbar = policy.mean_features()
    return (policy.features[s, a] - fbar[s]).sum(axis=0) if a.size else np.zeros(policy.k)


def trajectory_log_likelihood(policy: SoftmaxPolicy, trajectory: Trajectory) -> float:
    """Policy part of ``log P(trajectory)``; the only theta-dependent term."""
    return float(sum(policy.log_prob(int(s), int(a))
                     for s, a in zip(trajectory.states, trajectory.actions)))


def _as_features(policy_or_features) -> np.ndarray:
    if isinstance(policy_or_features, SoftmaxPolicy):
        return policy_or_features.features
    return np.asarray(policy_or_features, dtype=np.float64)


class MdpModel(StochasticModel):
    """Total episode reward of an MDP under the softmax policy at ``theta``."""

    def __init__(self, mdp: EpisodicMdp, features):
        self.mdp = mdp
        self.features = _as_features(features)
        SoftmaxPolicy(self.features, np.zeros(self.features.shape[2]))

    @property
    def k(self) -> int:
        return self.features.shape[2]

    @property
    def support_bound(self) -> float:
        return float(self.mdp.t_max * np.max(np.abs(self.mdp.reward_values)) + self.mdp.eta)

    def policy(self, theta) -> SoftmaxPolicy:
        return SoftmaxPolicy(self.features, theta)

    def sample(self, theta, n, rng):
        tb = simulate_batch(self.mdp, self.policy(theta), n, rng)
        return ScoredBatch(rewards=tb.total_reward, scores=tb.scores, x=tb.step_rewards, y=tb)


class MdpProposal(ProposalFamily):
    """Value-tilted transition kernel; ``omega = 0`` is the nominal MDP."""

    omega0 = np.zeros(1)

    def __init__(self, mdp: EpisodicMdp, features, value_fn=None):
        self.mdp = mdp
        self.features = _as_features(features)
        self.value_fn = value_fn

    def _value(self, theta) -> np.ndarray:
        policy = SoftmaxPolicy(self.features, theta)
        if self.value_fn is None:
            return policy.value_heuristic()
        return np.asarray(self.value_fn(policy), dtype=np.float64)

    def sample(self, theta, omega, n, rng):
        w = float(np.asarray(omega).reshape(-1)[0])
        policy = SoftmaxPolicy(self.features, theta)
        tb = simulate_batch(self.mdp, policy, n, rng, omega=w, value=self._value(theta))
        return ScoredBatch(rewards=tb.total_reward, scores=tb.scores, x=tb.step_rewards,
                           y=tb, log_lr=tb.log_lr)

    def _steps(self, batch):
        tb: TrajectoryBatch = batch.y
        T = tb.actions.shape[1]
        valid = tb.actions >= 0
        s = np.where(valid, tb.states[:, :T], 0)
        a = np.where(valid, tb.actions, 0)
        s2 = np.where(valid, tb.states[:, 1:], 0)
        return valid, s, a, s2

    def log_ratio(self, theta, omega, batch):
        w = float(np.asarray(omega).reshape(-1)[0])
        V = self._value(theta)
        P = self.mdp.transitions
        Q = tilted_transitions(self.mdp, V, w)
        valid, s, a, s2 = self._steps(batch)
        with np.errstate(divide="ignore"):
            step = np.log(P[s, a, s2]) - np.log(Q[s, a, s2])
        return np.where(valid, step, 0.0).sum(axis=1)

    def grad_log_g(self, theta, omega, batch):
        # d/domega log q(s'|s,a) = -V(s') + sum_y q(y|s,a) V(y)
        w = float(np.asarray(omega).reshape(-1)[0])
        V = self._value(theta)
        Q = tilted_transitions(self.mdp, V, w)
        EV = Q @ V
        valid, s, a, s2 = self._steps(batch)
        step = -V[s2] + EV[s, a]
        return np.where(valid, step, 0.0).sum(axis=1)[:, None]


def as_model(mdp: EpisodicMdp, policy) -> MdpModel:
    return MdpModel(mdp, policy)


def as_proposal(mdp: EpisodicMdp, policy, value_fn=None) -> MdpProposal:
    return MdpProposal(mdp, policy, value_fn)
