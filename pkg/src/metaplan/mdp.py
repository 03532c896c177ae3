"""Tabular MDPs and exact dynamic-programming planners.

Array conventions used throughout the package:

    P[s, a, s']  transition probabilities, shape (S, A, S)
    R[s, a]      expected immediate reward, shape (S, A)
    policy[s]    deterministic action index, shape (S,)
    V[s]         state values, shape (S,)

Ties between actions are always broken toward the lowest action index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InvalidInputError

SIMPLEX_TOL = 1e-9
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 100_000

# Q-values closer than this (relative) to the row max count as tied.
_TIE_RTOL = 1e-12


def _frozen(x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float)
    x.setflags(write=False)
    return x


@dataclass(frozen=True)
class TransitionModel:
    """Row-stochastic tensor ``probs[s, a, s']``."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 3 or p.shape[0] != p.shape[2] or p.shape[0] < 1 or p.shape[1] < 1:
            raise InvalidInputError(f"transition tensor must have shape (S, A, S), got {p.shape}")
        if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0 + SIMPLEX_TOL:
            raise InvalidInputError("transition probabilities must lie in [0, 1]")
        dev = np.abs(p.sum(axis=2) - 1.0).max()
        if dev > SIMPLEX_TOL:
            raise InvalidInputError(f"transition rows must sum to 1 (max deviation {dev:.2e})")
        object.__setattr__(self, "probs", p)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TransitionModel":
        return cls(np.full((n_states, n_actions, n_states), 1.0 / n_states))


@dataclass(frozen=True)
class RewardTable:
    """State-action rewards bounded in ``[0, rmax]``."""

    rewards: np.ndarray
    rmax: float = 1.0

    def __post_init__(self):
        r = _frozen(self.rewards)
        if r.ndim != 2:
            raise InvalidInputError(f"reward table must have shape (S, A), got {r.shape}")
        if self.rmax <= 0:
            raise InvalidInputError("rmax must be positive")
        if r.min() < 0.0 or r.max() > self.rmax:
            raise InvalidInputError(f"rewards must lie in [0, {self.rmax}]")
        object.__setattr__(self, "rewards", r)


@dataclass(frozen=True)
class MdpInstance:
    transitions: TransitionModel
    rewards: RewardTable
    gamma_eval: float

    def __post_init__(self):
        if not 0.0 < self.gamma_eval < 1.0:
            raise InvalidInputError("gamma_eval must lie in (0, 1)")
        if self.rewards.rewards.shape != self.transitions.probs.shape[:2]:
            raise InvalidInputError(
                f"reward shape {self.rewards.rewards.shape} does not match "
                f"transition shape {self.transitions.probs.shape}"
            )

    @property
    def n_states(self) -> int:
        return self.transitions.n_states

    @property
    def n_actions(self) -> int:
        return self.transitions.n_actions

    def with_transitions(self, transitions: TransitionModel) -> "MdpInstance":
        """Same rewards and evaluation discount, different dynamics."""
        return MdpInstance(transitions, self.rewards, self.gamma_eval)


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma < 1.0:
        raise InvalidInputError(f"discount must lie in [0, 1), got {gamma}")


def _check_policy(mdp: MdpInstance, policy) -> np.ndarray:
    policy = np.asarray(policy)
    if policy.shape != (mdp.n_states,):
        raise InvalidInputError(f"policy must have length {mdp.n_states}, got shape {policy.shape}")
    if not np.issubdtype(policy.dtype, np.integer):
        raise InvalidInputError("policy entries must be integer action indices")
    if policy.min() < 0 or policy.max() >= mdp.n_actions:
        raise InvalidInputError(f"policy actions must lie in [0, {mdp.n_actions})")
    return policy


def _greedy(q: np.ndarray) -> np.ndarray:
    """Row-wise argmax over the last axis with lowest-index tie-breaking."""
    best = q.max(axis=-1, keepdims=True)
    tied = q >= best - _TIE_RTOL * np.maximum(1.0, np.abs(best))
    return np.argmax(tied, axis=-1)


def q_values(mdp: MdpInstance, v: np.ndarray, gamma: float) -> np.ndarray:
    """``Q(s, a) = R(s, a) + gamma * <P(s, a, .), V>``."""
    return mdp.rewards.rewards + gamma * mdp.transitions.probs @ v


def policy_evaluation(
    mdp: MdpInstance,
    policy,
    gamma: float,
    tol: float = DEFAULT_TOL,
    method: str = "direct",
    max_iters: int = DEFAULT_MAX_ITERS,
) -> np.ndarray:
    """Value of a deterministic policy at discount ``gamma``.

    ``method="direct"`` solves ``(I - gamma P_pi) V = R_pi``; ``"iterative"``
    applies the policy's Bellman operator until the sup-norm residual of the
    returned V is at most ``tol``.
    """
    _check_gamma(gamma)
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    policy = _check_policy(mdp, policy)
    states = np.arange(mdp.n_states)
    p_pi = mdp.transitions.probs[states, policy]
    r_pi = mdp.rewards.rewards[states, policy]
    if method == "direct":
        return np.linalg.solve(np.eye(mdp.n_states) - gamma * p_pi, r_pi)
    if method != "iterative":
        raise InvalidInputError(f"unknown evaluation method {method!r}")
    v = np.zeros(mdp.n_states)
    for _ in range(max_iters):
        v_new = r_pi + gamma * p_pi @ v
        residual = np.abs(v_new - v).max()
        v = v_new
        # residual of v_new is at most gamma times the step just taken
        if gamma * residual <= tol:
            return v
    raise ConvergenceError("policy evaluation did not converge", gamma * residual)


def greedy_policy(mdp: MdpInstance, v, gamma: float) -> np.ndarray:
    """Greedy improvement step with respect to ``v``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (mdp.n_states,):
        raise InvalidInputError(f"value function must have length {mdp.n_states}")
    return _greedy(q_values(mdp, v, gamma))


def bellman_residual(mdp: MdpInstance, v, gamma: float) -> float:
    """Sup-norm distance between ``v`` and its Bellman optimality backup."""
    v = np.asarray(v, dtype=float)
    return float(np.abs(q_values(mdp, v, gamma).max(axis=1) - v).max())


def value_iteration(
    mdp: MdpInstance,
    gamma: float,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> tuple[np.ndarray, np.ndarray]:
    """Optimal values and a greedy policy at discount ``gamma``.

    Iterates until the returned V has Bellman residual at most ``tol``, so
    it sits within ``tol / (1 - gamma)`` of the fixed point.
    """
    _check_gamma(gamma)
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    v = np.zeros(mdp.n_states)
    residual = np.inf
    for _ in range(max_iters):
        v_new = q_values(mdp, v, gamma).max(axis=1)
        residual = np.abs(v_new - v).max()
        v = v_new
        if gamma * residual <= tol:
            return v, greedy_policy(mdp, v, gamma)
    raise ConvergenceError(f"value iteration exceeded {max_iters} iterations", float(residual))


def policy_iteration(
    mdp: MdpInstance, gamma: float, max_iters: int = 1_000
) -> tuple[np.ndarray, np.ndarray]:
    """Exact optimal values and policy by Howard's policy iteration."""
    _check_gamma(gamma)
    policies = plan_batch(
        mdp.transitions.probs, mdp.rewards.rewards, np.array([gamma]), max_iters=max_iters
    )
    policy = policies[0]
    return policy_evaluation(mdp, policy, gamma), policy


def evaluate_batch(probs: np.ndarray, rewards: np.ndarray, policies: np.ndarray, gammas) -> np.ndarray:
    """Exact values of a stack of policies, one discount per policy.

    ``policies`` has shape (G, S); ``gammas`` broadcasts to (G,). Returns (G, S).
    """
    policies = np.asarray(policies)
    n_batch, n_states = policies.shape
    gammas = np.broadcast_to(np.asarray(gammas, dtype=float), (n_batch,))
    states = np.arange(n_states)
    p_pi = probs[states[None, :], policies]  # (G, S, S)
    r_pi = rewards[states[None, :], policies]  # (G, S)
    lhs = np.eye(n_states)[None] - gammas[:, None, None] * p_pi
    return np.linalg.solve(lhs, r_pi[..., None])[..., 0]


def plan_batch(probs: np.ndarray, rewards: np.ndarray, gammas, max_iters: int = 1_000) -> np.ndarray:
    """Optimal deterministic policies for several discounts at once.

    Howard policy iteration run in lockstep over ``gammas``; an action is
    only switched on strict improvement, and the returned policies are the
    lowest-index greedy policies of the final exact values. Returns (G, S).
    """
    gammas = np.asarray(gammas, dtype=float)
    if gammas.ndim != 1 or gammas.size == 0:
        raise InvalidInputError("gammas must be a non-empty 1-D sequence")
    if gammas.min() < 0.0 or gammas.max() >= 1.0:
        raise InvalidInputError("every discount must lie in [0, 1)")
    n_states = probs.shape[0]
    states = np.arange(n_states)
    policies = np.tile(_greedy(rewards), (gammas.size, 1))
    for _ in range(max_iters):
        v = evaluate_batch(probs, rewards, policies, gammas)
        q = rewards[None] + gammas[:, None, None] * np.einsum("sap,gp->gsa", probs, v)
        current = q[np.arange(gammas.size)[:, None], states[None, :], policies]
        best = q.max(axis=2)
        improvable = best > current + _TIE_RTOL * np.maximum(1.0, np.abs(best))
        if not improvable.any():
            return _greedy(q)
        policies = np.where(improvable, np.argmax(q, axis=2), policies)
    raise ConvergenceError("policy iteration did not stabilise", float((best - current).max()))
