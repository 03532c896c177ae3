"""Within-task model estimates and the cross-task meta-updates.

The meta-learner keeps a :class:`PriorState`: the running average of every
empirical model seen so far (the prior that new estimates are shrunk
toward) plus Welford aggregates of the same stream, from which a per-(s, a)
task-similarity estimate is read off.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError
from .mdp import TransitionModel
from .tasks import DEFAULT_SIGMA_CONVENTION, SIGMA_CONVENTIONS, SampleBatch

PRIOR_STATE_VERSION = "metaplan.PriorState/1"


def empirical_model(batch: SampleBatch) -> TransitionModel:
    """Count-based estimate ``counts / m``."""
    return TransitionModel(batch.counts / batch.m)


def mixing_rate(sigma, m: int, t: int):
    """Weight on the prior: ``1 / (sigma^2 (1 + 1/t) m + 1)``.

    ``sigma`` may be a scalar or an array (one rate per entry).
    """
    if m < 1 or t < 1:
        raise InvalidInputError("mixing_rate needs m >= 1 and t >= 1")
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise InvalidInputError("sigma must be nonnegative")
    alpha = 1.0 / (sigma**2 * (1.0 + 1.0 / t) * m + 1.0)
    return float(alpha) if alpha.ndim == 0 else alpha


def rls_estimate(empirical: TransitionModel, prior: TransitionModel, alpha) -> TransitionModel:
    """Closed-form minimiser of the prior-regularised least-squares loss.

    ``alpha`` is a scalar or an (S, A) array of per-pair weights in [0, 1].
    """
    if empirical.probs.shape != prior.probs.shape:
        raise InvalidInputError("empirical and prior models must have the same shape")
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0) or np.any(alpha > 1):
        raise InvalidInputError("alpha must lie in [0, 1]")
    if alpha.ndim == 2:
        alpha = alpha[..., None]
    if np.all(alpha == 0):
        return empirical
    if np.all(alpha == 1):
        return prior
    return TransitionModel(alpha * prior.probs + (1.0 - alpha) * empirical.probs)


def rls_objective(candidate, empirical, prior, lam: float) -> float:
    """``||empirical - P||^2 + lam ||P - prior||^2`` summed over (s, a)."""
    candidate, empirical, prior = (np.asarray(x, dtype=float) for x in (candidate, empirical, prior))
    return float(((empirical - candidate) ** 2).sum() + lam * ((candidate - prior) ** 2).sum())


@dataclass(frozen=True)
class ModelEstimate:
    model: TransitionModel
    alpha: float
    empirical: TransitionModel
    prior: TransitionModel


@dataclass(frozen=True)
class PriorState:
    """Meta-learner state after ``task_count`` tasks.

    ``sigma_hat`` is the per-(s, a) task-similarity estimate; it stays at
    ``sigma_hat_init`` until two tasks have been absorbed. Welford
    aggregates use the population divisor.
    """

    prior: TransitionModel
    task_count: int
    sigma_hat: np.ndarray
    welford_mean: np.ndarray
    welford_m2: np.ndarray
    welford_count: int = 0
    sigma_hat_init: float = 0.05
    sigma_convention: str = DEFAULT_SIGMA_CONVENTION

    @classmethod
    def initial(
        cls, n_states: int, n_actions: int, sigma_hat_init: float | None = None, sigma_convention: str = DEFAULT_SIGMA_CONVENTION
    ) -> "PriorState":
        if sigma_convention not in SIGMA_CONVENTIONS:
            raise InvalidInputError(f"sigma_convention must be one of {SIGMA_CONVENTIONS}")
        if sigma_hat_init is None:
            sigma_hat_init = 0.5 / n_states
        if sigma_hat_init < 0:
            raise InvalidInputError("sigma_hat_init must be nonnegative")
        shape = (n_states, n_actions, n_states)
        return cls(
            prior=TransitionModel.uniform(n_states, n_actions),
            task_count=0,
            sigma_hat=np.full(shape[:2], float(sigma_hat_init)),
            welford_mean=np.zeros(shape),
            welford_m2=np.zeros(shape),
            welford_count=0,
            sigma_hat_init=float(sigma_hat_init),
            sigma_convention=sigma_convention,
        )

    @property
    def sigma_hat_max(self) -> float:
        return float(self.sigma_hat.max())

    def variance(self) -> np.ndarray:
        """Population variance ``M2 / n`` per (s, a, s'); zeros before any update."""
        return self.welford_m2 / max(self.welford_count, 1)

    def to_dict(self) -> dict:
        return {
            "version": PRIOR_STATE_VERSION,
            "prior": self.prior.probs.tolist(),
            "task_count": self.task_count,
            "sigma_hat": self.sigma_hat.tolist(),
            "welford_mean": self.welford_mean.tolist(),
            "welford_m2": self.welford_m2.tolist(),
            "welford_count": self.welford_count,
            "sigma_hat_init": self.sigma_hat_init,
            "sigma_convention": self.sigma_convention,
        }

    def to_json(self) -> str:
        # repr-precision floats, so a round trip is exact
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "PriorState":
        if data.get("version") != PRIOR_STATE_VERSION:
            raise InvalidInputError(f"unsupported PriorState version {data.get('version')!r}")
        return cls(
            prior=TransitionModel(np.array(data["prior"])),
            task_count=int(data["task_count"]),
            sigma_hat=np.array(data["sigma_hat"], dtype=float),
            welford_mean=np.array(data["welford_mean"], dtype=float),
            welford_m2=np.array(data["welford_m2"], dtype=float),
            welford_count=int(data["welford_count"]),
            sigma_hat_init=float(data["sigma_hat_init"]),
            sigma_convention=data["sigma_convention"],
        )

    @classmethod
    def from_json(cls, text: str) -> "PriorState":
        return cls.from_dict(json.loads(text))


def update_prior(state: PriorState, empirical: TransitionModel) -> PriorState:
    """Fold one task's empirical model into the running average of means."""
    if empirical.probs.shape != state.prior.probs.shape:
        raise InvalidInputError("empirical model shape does not match the prior")
    t = state.task_count + 1
    if t == 1:
        prior = empirical
    else:
        prior = TransitionModel((1.0 - 1.0 / t) * state.prior.probs + empirical.probs / t)
    return replace(state, prior=prior, task_count=t)


def welford_update(state: PriorState, empirical: TransitionModel) -> PriorState:
    """One Welford step on the stream of per-task empirical models.

    ``sigma_hat[s, a]`` becomes the largest per-coordinate population
    variance (or its square root under the ``stddev`` convention).
    """
    x = empirical.probs
    if x.shape != state.welford_mean.shape:
        raise InvalidInputError("empirical model shape does not match the Welford aggregates")
    n = state.welford_count + 1
    delta = x - state.welford_mean
    mean = state.welford_mean + delta / n
    m2 = state.welford_m2 + delta * (x - mean)
    if n == 1:
        sigma_hat = np.full(x.shape[:2], state.sigma_hat_init)
    else:
        variance = (m2 / n).max(axis=2)
        sigma_hat = variance if state.sigma_convention == "variance" else np.sqrt(variance)
    return replace(state, welford_mean=mean, welford_m2=m2, welford_count=n, sigma_hat=sigma_hat)


def meta_update(state: PriorState, empirical: TransitionModel) -> PriorState:
    """Prior and variance updates applied together after a task."""
    return welford_update(update_prior(state, empirical), empirical)
