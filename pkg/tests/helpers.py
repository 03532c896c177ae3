import itertools

import numpy as np

from metaplan.mdp import MdpInstance, RewardTable, TransitionModel


def make_mdp(seed, n_states=5, n_actions=2, gamma_eval=0.99, sparse=False):
    """Random dense MDP from numpy's default generator (independent of the package's streams)."""
    gen = np.random.default_rng(seed)
    probs = gen.random((n_states, n_actions, n_states))
    if sparse:
        probs *= gen.random(probs.shape) < 0.5
        probs[..., 0] += 1e-3
    probs /= probs.sum(axis=2, keepdims=True)
    rewards = gen.random((n_states, n_actions))
    return MdpInstance(TransitionModel(probs), RewardTable(rewards), gamma_eval)


def all_policies(n_states, n_actions):
    return [np.array(p) for p in itertools.product(range(n_actions), repeat=n_states)]


def exact_values(probs, rewards, policy, gamma):
    """Plain dense solve of (I - gamma P_pi) V = R_pi."""
    n = probs.shape[0]
    idx = np.arange(n)
    return np.linalg.solve(np.eye(n) - gamma * probs[idx, policy], rewards[idx, policy])


def brute_force_optimum(probs, rewards, gamma):
    """Componentwise max over all deterministic policies, and one policy attaining it."""
    best_v, best_pi = None, None
    for pi in all_policies(probs.shape[0], probs.shape[1]):
        v = exact_values(probs, rewards, pi, gamma)
        if best_v is None or v.sum() > best_v.sum() + 1e-12:
            best_v, best_pi = v, pi
    return best_v, best_pi
