"""Online meta-learning drivers.

A run walks a stream of ``T`` tasks drawn from one :class:`MetaDistribution`.
For each task every estimator variant builds a model from the same batch,
plans with it at every discount of the grid (and at whatever discount the
schedule picks), and the resulting policies are scored in the true task at
``gamma_eval``. Meta-updates happen after planning.

Variants:

``no_meta``            count-based estimate of the current batch only
``pomrl_known_sigma``  shrink toward the running average of past empirical
                       models, mixing rate from the true similarity
``ada_pomrl``          same, with the similarity estimated online (Welford)
``oracle_prior``       shrink toward the true mean model, true similarity
``aggregating``        plan with the running average itself (weight 1)
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, TaskError
from .estimation import PriorState, empirical_model, meta_update, mixing_rate, rls_estimate
from .horizon import DEFAULT_GAMMA_GRID, GammaSchedule, hindsight_select
from .mdp import MdpInstance, RewardTable, TransitionModel, evaluate_batch, plan_batch, policy_iteration
from .tasks import MetaDistribution, RngStream, sample_batch, sample_task

VARIANTS = ("pomrl_known_sigma", "ada_pomrl", "oracle_prior", "no_meta", "aggregating")

# Child keys of a run's RngStream.
TASK_KEY, BATCH_KEY = 2, 3

_GRID_ATOL = 1e-12


@dataclass(frozen=True)
class AlgorithmVariant:
    kind: str

    def __post_init__(self):
        if self.kind not in VARIANTS:
            raise InvalidInputError(f"variant must be one of {VARIANTS}, got {self.kind!r}")

    @property
    def needs_true_sigma(self) -> bool:
        return self.kind in ("pomrl_known_sigma", "oracle_prior")


def optimal_values(mdp: MdpInstance) -> np.ndarray:
    """``V*`` of the true task at its evaluation discount."""
    return policy_iteration(mdp, mdp.gamma_eval)[0]


def planning_losses(true_mdp: MdpInstance, est_model: TransitionModel, gammas, v_star=None) -> np.ndarray:
    """Planning loss for each discount in ``gammas``.

    The policy is optimal for (true rewards, ``est_model``) at the guidance
    discount; both it and the true optimum are valued in ``true_mdp`` at
    ``gamma_eval`` and compared in sup norm.
    """
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    if gammas.min() < 0.0 or gammas.max() > true_mdp.gamma_eval:
        raise InvalidInputError("guidance discounts must lie in [0, gamma_eval]")
    if est_model.probs.shape != true_mdp.transitions.probs.shape:
        raise InvalidInputError("estimated model shape does not match the true MDP")
    rewards = true_mdp.rewards.rewards
    if v_star is None:
        v_star = optimal_values(true_mdp)
    policies = plan_batch(est_model.probs, rewards, gammas)
    values = evaluate_batch(true_mdp.transitions.probs, rewards, policies, true_mdp.gamma_eval)
    return np.abs(v_star[None, :] - values).max(axis=1)


def planning_loss(true_mdp: MdpInstance, est_model: TransitionModel, gamma: float) -> float:
    return float(planning_losses(true_mdp, est_model, [gamma])[0])


@dataclass
class RunRecord:
    """Everything recorded for one (seed, variant, schedule) run."""

    variant: str
    schedule: str
    seed: int
    gammas: np.ndarray
    per_task_loss: np.ndarray  # (T, len(gammas))
    chosen_gamma: np.ndarray
    chosen_loss: np.ndarray
    alpha_trace: np.ndarray
    sigma_hat_trace: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_tasks(self) -> int:
        return self.per_task_loss.shape[0]

    def grid_index(self, gamma: float) -> int | None:
        hits = np.flatnonzero(np.abs(self.gammas - gamma) <= _GRID_ATOL)
        return int(hits[0]) if hits.size else None

    def optimal_gamma(self) -> np.ndarray:
        """Per-task grid argmin, ties to the smaller discount."""
        return hindsight_select(self.per_task_loss, self.gammas, "dynamic_best")[0]

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "schedule": self.schedule,
            "seed": self.seed,
            "gammas": self.gammas.tolist(),
            "per_task_loss": self.per_task_loss.tolist(),
            "chosen_gamma": self.chosen_gamma.tolist(),
            "chosen_loss": self.chosen_loss.tolist(),
            "alpha_trace": self.alpha_trace.tolist(),
            "sigma_hat_trace": self.sigma_hat_trace.tolist(),
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        arrays = ("gammas", "per_task_loss", "chosen_gamma", "chosen_loss", "alpha_trace", "sigma_hat_trace")
        kwargs = {k: np.asarray(data[k], dtype=float) for k in arrays}
        return cls(variant=data["variant"], schedule=data["schedule"], seed=int(data["seed"]), meta=data.get("meta", {}), **kwargs)

    def long_rows(self) -> list[dict]:
        """Rows of the long CSV: one per grid discount, plus the chosen one if off-grid."""
        rows = []
        for t in range(self.n_tasks):
            chosen_idx = self.grid_index(self.chosen_gamma[t])
            for j, gamma in enumerate(self.gammas):
                rows.append(
                    {
                        "seed": self.seed,
                        "variant": self.variant,
                        "schedule": self.schedule,
                        "task": t + 1,
                        "gamma": float(gamma),
                        "loss": float(self.per_task_loss[t, j]),
                        "chosen": int(j == chosen_idx),
                    }
                )
            if chosen_idx is None:
                rows.append(
                    {
                        "seed": self.seed,
                        "variant": self.variant,
                        "schedule": self.schedule,
                        "task": t + 1,
                        "gamma": float(self.chosen_gamma[t]),
                        "loss": float(self.chosen_loss[t]),
                        "chosen": 1,
                    }
                )
        return rows


def task_averaged_regret(record: RunRecord, gamma: float) -> float:
    """Mean planning loss over the task stream at a grid discount."""
    idx = record.grid_index(gamma)
    if idx is None:
        raise InvalidInputError(f"gamma {gamma} is not on the record's grid")
    return float(record.per_task_loss[:, idx].mean())


class _Learner:
    """Per-variant state carried across tasks."""

    def __init__(self, kind: str, dist: MetaDistribution, m: int, sigma_hat_init, cap_sigma: float):
        self.kind = kind
        self.dist = dist
        self.m = m
        self.cap_sigma = cap_sigma
        self.state = PriorState.initial(
            dist.n_states, dist.n_actions, sigma_hat_init, dist.sigma_convention
        )
        self.pooled = np.zeros(dist.mean.probs.shape, dtype=np.int64)

    def estimate(self, t: int, batch) -> tuple[TransitionModel, float, float]:
        """(model, alpha, sigma used) for task ``t`` (1-based)."""
        emp = empirical_model(batch)
        sigma = self.dist.sigma
        if self.kind == "no_meta":
            return emp, 0.0, self.cap_sigma
        if self.kind == "oracle_prior":
            alpha = mixing_rate(sigma, self.m, t)
            return rls_estimate(emp, self.dist.mean, alpha), alpha, sigma
        if self.kind == "aggregating":
            if t == 1:
                return emp, 0.0, 0.0
            return TransitionModel(self.pooled / self.pooled.sum(axis=2, keepdims=True)), 1.0, 0.0
        if self.kind == "ada_pomrl":
            sigma = self.state.sigma_hat_max
        if t == 1:
            return emp, 0.0, sigma
        alpha = mixing_rate(sigma, self.m, t - 1)
        return rls_estimate(emp, self.state.prior, alpha), alpha, sigma

    def absorb(self, batch) -> None:
        if self.kind == "aggregating":
            self.pooled += batch.counts
        elif self.kind in ("pomrl_known_sigma", "ada_pomrl"):
            self.state = meta_update(self.state, empirical_model(batch))


def run_variants(
    variants,
    dist: MetaDistribution,
    rewards: RewardTable,
    n_tasks: int,
    m: int,
    schedules,
    gamma_grid=DEFAULT_GAMMA_GRID,
    rng: RngStream | None = None,
    *,
    gamma_eval: float = 0.99,
    sigma_hat_init: float | None = None,
    cap_sigma: float = 1.0,
    seed: int | None = None,
) -> dict[tuple[str, str], RunRecord]:
    """Run several variants and schedules over one shared task stream.

    Every variant sees the same tasks and batches; for a given variant the
    loss grid is shared by all schedules. Returns records keyed by
    ``(variant, schedule label)``.
    """
    if n_tasks < 1 or m < 1:
        raise InvalidInputError("need n_tasks >= 1 and m >= 1")
    if rng is None:
        raise InvalidInputError("an RngStream is required")
    grid = np.asarray(gamma_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid.min() < 0 or grid.max() > gamma_eval:
        raise InvalidInputError("gamma grid must be non-empty and lie in [0, gamma_eval]")
    variants = [v if isinstance(v, AlgorithmVariant) else AlgorithmVariant(v) for v in variants]
    schedules = [s if isinstance(s, GammaSchedule) else GammaSchedule.parse(s) for s in schedules]
    labels = [s.label for s in schedules]
    if len(set(labels)) != len(labels):
        raise InvalidInputError("schedule labels must be unique")
    n_states, n_actions = dist.n_states, dist.n_actions
    online = [s for s in schedules if not s.is_hindsight]

    learners = {v.kind: _Learner(v.kind, dist, m, sigma_hat_init, cap_sigma) for v in variants}
    loss = {v.kind: np.zeros((n_tasks, grid.size)) for v in variants}
    chosen = {(v.kind, s.label): np.zeros((2, n_tasks)) for v in variants for s in online}
    alphas = {v.kind: np.zeros(n_tasks) for v in variants}
    sigmas = {v.kind: np.zeros(n_tasks) for v in variants}

    for t in range(1, n_tasks + 1):
        try:
            task = sample_task(dist, rng.child(TASK_KEY, t))
            batch = sample_batch(task, m, rng.child(BATCH_KEY, t))
            mdp = MdpInstance(task, rewards, gamma_eval)
            v_star = optimal_values(mdp)
            for v in variants:
                learner = learners[v.kind]
                model, alpha, sigma_used = learner.estimate(t, batch)
                alphas[v.kind][t - 1] = alpha
                sigmas[v.kind][t - 1] = sigma_used
                picks = [
                    s.select(
                        t=t, m=m, alpha_t=alpha, sigma_t=sigma_used,
                        s_count=n_states, a_count=n_actions, gamma_eval=gamma_eval,
                    )
                    for s in online
                ]
                losses = planning_losses(mdp, model, np.concatenate([grid, picks]), v_star)
                loss[v.kind][t - 1] = losses[: grid.size]
                for s, gamma, value in zip(online, picks, losses[grid.size :]):
                    chosen[(v.kind, s.label)][:, t - 1] = gamma, value
                learner.absorb(batch)
        except InvalidInputError:
            raise
        except Exception as exc:
            raise TaskError(t, exc) from exc

    seed = rng.stream if seed is None else seed
    records = {}
    for v in variants:
        for s in schedules:
            if s.is_hindsight:
                picked_gamma, picked_loss = hindsight_select(loss[v.kind], grid, s.kind)
            else:
                picked_gamma, picked_loss = chosen[(v.kind, s.label)]
            records[(v.kind, s.label)] = RunRecord(
                variant=v.kind,
                schedule=s.label,
                seed=seed,
                gammas=grid.copy(),
                per_task_loss=loss[v.kind].copy(),
                chosen_gamma=np.array(picked_gamma, dtype=float),
                chosen_loss=np.array(picked_loss, dtype=float),
                alpha_trace=alphas[v.kind].copy(),
                sigma_hat_trace=sigmas[v.kind].copy(),
                meta={"sigma": dist.sigma, "sigma_convention": dist.sigma_convention},
            )
    return records


def run_variant(
    variant,
    dist: MetaDistribution,
    rewards: RewardTable,
    n_tasks: int,
    m: int,
    schedule,
    gamma_grid=DEFAULT_GAMMA_GRID,
    rng: RngStream | None = None,
    **kwargs,
) -> RunRecord:
    """Single-variant, single-schedule form of :func:`run_variants`."""
    variant = variant if isinstance(variant, AlgorithmVariant) else AlgorithmVariant(variant)
    schedule = schedule if isinstance(schedule, GammaSchedule) else GammaSchedule.parse(schedule)
    records = run_variants([variant], dist, rewards, n_tasks, m, [schedule], gamma_grid, rng, **kwargs)
    return records[(variant.kind, schedule.label)]
