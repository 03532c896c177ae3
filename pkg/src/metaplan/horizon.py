"""Choosing the guidance discount.

Contains the discount-bias constant, the two planning-loss bounds (with
constants and poly-log factors stripped, so they describe a shape rather
than a certified bound), the surrogate ``U`` and its piecewise minimiser,
the phase-based and bound-guided schedules, and hindsight selectors over
a loss grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

DEFAULT_GAMMA_GRID = tuple(round(0.05 * i, 2) for i in range(20)) + (0.99,)
DEFAULT_GAMMA0 = 0.3
# one transition per sample, so phases grow by S*A per task
DEFAULT_L_MAX = 1.0

SCHEDULE_KINDS = ("fixed", "dong", "bound_guided", "best_fixed", "dynamic_best")
HINDSIGHT_KINDS = ("best_fixed", "dynamic_best")


def gamma_bias(gamma: float, gamma_eval: float, rmax: float = 1.0) -> float:
    """Worst-case value lost by planning at ``gamma`` instead of ``gamma_eval``."""
    if not 0.0 <= gamma_eval < 1.0:
        raise InvalidInputError("gamma_eval must lie in [0, 1)")
    if gamma < 0.0 or gamma > gamma_eval:
        raise InvalidInputError(f"need 0 <= gamma <= gamma_eval, got gamma={gamma}, gamma_eval={gamma_eval}")
    return (gamma_eval - gamma) / ((1.0 - gamma_eval) * (1.0 - gamma)) * rmax


@dataclass(frozen=True)
class BoundParams:
    m: int
    t_tasks: int
    s_count: int
    a_count: int
    sigma: float = 0.0
    cap_sigma: float = 1.0
    delta: float = 0.05
    gamma_eval: float = 0.99
    rmax: float = 1.0
    policy_count_log: float | None = None  # None: S log A, the log of A^S

    def __post_init__(self):
        problems = []
        if self.m < 1 or self.t_tasks < 1 or self.s_count < 1 or self.a_count < 1:
            problems.append("m, t_tasks, s_count and a_count must be positive")
        if self.sigma < 0:
            problems.append("sigma must be nonnegative")
        if not 0.0 < self.cap_sigma <= 1.0:
            problems.append("cap_sigma must lie in (0, 1]")
        if not 0.0 < self.delta < 1.0:
            problems.append("delta must lie in (0, 1)")
        if not 0.0 < self.gamma_eval < 1.0:
            problems.append("gamma_eval must lie in (0, 1)")
        if self.rmax <= 0:
            problems.append("rmax must be positive")
        if self.policy_count_log is not None and self.policy_count_log < 0:
            problems.append("policy_count_log must be nonnegative")
        if problems:
            raise InvalidInputError("; ".join(problems))

    @property
    def log_policies(self) -> float:
        if self.policy_count_log is None:
            return self.s_count * math.log(self.a_count)
        return self.policy_count_log


def _bias(gamma: float, gamma_eval: float) -> float:
    if gamma < 0.0 or gamma > gamma_eval:
        raise InvalidInputError(f"need 0 <= gamma <= gamma_eval, got {gamma}")
    return (gamma_eval - gamma) / ((1.0 - gamma_eval) * (1.0 - gamma))


def theorem1_terms(gamma: float, p: BoundParams, log_factor: float = 1.0) -> tuple[float, float]:
    """(bias, uncertainty) terms of the single-task count-based bound."""
    bias = _bias(gamma, p.gamma_eval)
    width = math.sqrt(p.cap_sigma / (2 * p.m) * (math.log(2 * p.s_count * p.a_count / p.delta) + p.log_policies))
    return bias, log_factor * 2 * gamma * p.rmax / (1 - gamma) ** 2 * width


def theorem1_bound(gamma: float, p: BoundParams, log_factor: float = 1.0) -> float:
    return sum(theorem1_terms(gamma, p, log_factor))


def theorem2_bracket(m: int, t_tasks: int, sigma: float, cap_sigma: float = 1.0) -> float:
    """Model-uncertainty factor of the meta-learned bound."""
    s2m = sigma**2 * m
    first = (sigma + (sigma + math.sqrt(sigma**2 + cap_sigma / m)) / math.sqrt(t_tasks)) / (s2m + 1)
    return first + s2m * math.sqrt(cap_sigma / m) / (s2m + 1)


def sigma_zero_bracket(m: int, t_tasks: int, cap_sigma: float = 1.0) -> float:
    """Identical tasks: one model estimated from ``m * T`` samples."""
    return math.sqrt(cap_sigma / (m * t_tasks))


def sigma_one_bracket(m: int, t_tasks: int) -> float:
    """Unstructured tasks (sigma = cap_sigma = 1), in the simplified form.

    Drops the ``+1`` in the ``m + 1`` denominators, so it is the general
    bracket at sigma = 1 scaled by ``(m + 1) / m``.
    """
    return (1 + (1 + math.sqrt(1 + 1 / m)) / math.sqrt(t_tasks)) / m + 1 / math.sqrt(m)


def theorem2_terms(gamma: float, p: BoundParams, log_factor: float = 1.0) -> tuple[float, float]:
    """(bias, uncertainty) terms of the task-averaged bound."""
    bias = _bias(gamma, p.gamma_eval)
    bracket = theorem2_bracket(p.m, p.t_tasks, p.sigma, p.cap_sigma)
    return bias, log_factor * 2 * gamma * p.s_count / (1 - gamma) ** 2 * bracket


def theorem2_bound(gamma: float, p: BoundParams, log_factor: float = 1.0) -> float:
    return sum(theorem2_terms(gamma, p, log_factor))


def bound_curve(p: BoundParams, grid, theorem: int = 2, log_factor: float = 1.0) -> list[dict]:
    """Rows of ``gamma, bias_term, uncertainty_term, total`` over ``grid``."""
    terms = {1: theorem1_terms, 2: theorem2_terms}.get(theorem)
    if terms is None:
        raise InvalidInputError("theorem must be 1 or 2")
    grid = list(grid)
    if not grid:
        raise InvalidInputError("grid must be non-empty")
    rows = []
    for gamma in grid:
        bias, unc = terms(float(gamma), p, log_factor)
        rows.append({"gamma": float(gamma), "bias_term": bias, "uncertainty_term": unc, "total": bias + unc})
    return rows


def constant_c(m: int, t: int, sigma: float) -> float:
    """Problem-dependent weight of the uncertainty term after ``t`` tasks."""
    if m < 1 or t < 1:
        raise InvalidInputError("constant_c needs m >= 1 and t >= 1")
    if sigma < 0:
        raise InvalidInputError("sigma must be nonnegative")
    s2m = sigma**2 * m
    root_m = 1.0 / math.sqrt(m)
    return (sigma + root_m) / math.sqrt(t) / (s2m + 1) + s2m * root_m / (s2m + 1)


def u_curve(gamma, c: float, gamma_eval: float = 0.99):
    """Surrogate ``1/(1 - gamma_eval) + 1/(gamma - 1) + c gamma / (1 - gamma)^2``."""
    gamma = np.asarray(gamma, dtype=float)
    return 1.0 / (1.0 - gamma_eval) + 1.0 / (gamma - 1.0) + c * gamma / (1.0 - gamma) ** 2


def prop1_gamma(c: float) -> float:
    """Piecewise guidance discount read off the shape of ``U``.

    0 when ``c >= 1``, 1 when ``c < 1/2``, ``(1 - c) / (1 + c)`` in between.
    """
    if c < 0:
        raise InvalidInputError("c must be nonnegative")
    if c >= 1.0:
        return 0.0
    if c < 0.5:
        return 1.0
    return (1.0 - c) / (1.0 + c)


def u_minimizer(c: float) -> float:
    """Exact minimiser of ``U`` over [0, 1) for ``c > 0``.

    Unlike :func:`prop1_gamma`, this keeps the interior stationary point
    for ``c < 1/2`` as well: ``U`` blows up as gamma -> 1 for any c > 0.
    """
    if c <= 0:
        raise InvalidInputError("U has no minimiser on [0, 1) for c <= 0")
    return 0.0 if c >= 1.0 else (1.0 - c) / (1.0 + c)


def bound_guided_gamma(c: float, gamma0: float, gamma_eval: float) -> float:
    """``gamma0`` offset of :func:`prop1_gamma`, capped at ``gamma_eval``."""
    if not 0.0 <= gamma0 < 1.0:
        raise InvalidInputError("gamma0 must lie in [0, 1)")
    return min(gamma_eval, gamma0 + prop1_gamma(c))


def horizon_l_max(gamma_eval: float) -> float:
    """Effective horizon ``ceil(1 / (1 - gamma_eval))``, an alternative ``l_max``."""
    return float(math.ceil(round(1.0 / (1.0 - gamma_eval), 9)))


def dong_gamma(
    m: int,
    alpha_t: float,
    t: int,
    s_count: int,
    a_count: int,
    l_max: float,
    gamma_eval: float | None = None,
) -> float:
    """Phase-length schedule ``1 - T_t^(-1/5)``.

    ``T_t = m`` on the first task, afterwards
    ``(S A / L) ((1 - alpha_t) m + alpha_t m (t - 1))``. The result is
    clamped to ``[0, gamma_eval]``.
    """
    if m < 1 or t < 1 or l_max <= 0:
        raise InvalidInputError("dong_gamma needs m >= 1, t >= 1 and l_max > 0")
    if not 0.0 <= alpha_t <= 1.0:
        raise InvalidInputError("alpha_t must lie in [0, 1]")
    phase = float(m)
    if t >= 2:
        phase = s_count * a_count / l_max * ((1 - alpha_t) * m + alpha_t * m * (t - 1))
        if phase <= 0:
            phase = float(m)
    gamma = 1.0 - phase ** (-0.2)
    upper = gamma_eval if gamma_eval is not None else 1.0
    return float(min(max(gamma, 0.0), upper))


def hindsight_select(loss_grid, gammas, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-task discount choices made with the whole loss grid in view.

    ``loss_grid`` is (tasks, len(gammas)). ``best_fixed`` picks the column
    with the smallest mean; ``dynamic_best`` picks each row's minimum. Ties
    go to the smaller discount. Returns (chosen gammas, achieved losses).
    """
    grid = np.atleast_2d(np.asarray(loss_grid, dtype=float))
    gammas = np.asarray(gammas, dtype=float)
    if grid.size == 0 or grid.shape[1] != gammas.size:
        raise InvalidInputError("loss grid must be non-empty with one column per discount")
    order = np.argsort(gammas, kind="stable")
    grid, gammas = grid[:, order], gammas[order]
    rows = np.arange(grid.shape[0])
    if mode == "best_fixed":
        idx = np.full(grid.shape[0], np.argmin(grid.mean(axis=0)))
    elif mode == "dynamic_best":
        idx = np.argmin(grid, axis=1)
    else:
        raise InvalidInputError(f"unknown hindsight mode {mode!r}")
    return gammas[idx], grid[rows, idx]


@dataclass(frozen=True)
class GammaSchedule:
    """How the guidance discount is picked for each task.

    ``c_scale`` multiplies the problem constant before the bound-guided
    rule reads it.
    """

    kind: str
    gamma: float | None = None
    l_max: float | None = None
    gamma0: float = DEFAULT_GAMMA0
    c_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise InvalidInputError(f"schedule kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if self.kind == "fixed" and (self.gamma is None or not 0.0 <= self.gamma < 1.0):
            raise InvalidInputError("a fixed schedule needs gamma in [0, 1)")
        if not 0.0 <= self.gamma0 < 1.0:
            raise InvalidInputError("gamma0 must lie in [0, 1)")
        if self.c_scale <= 0:
            raise InvalidInputError("c_scale must be positive")

    @classmethod
    def fixed(cls, gamma: float) -> "GammaSchedule":
        return cls("fixed", gamma=gamma)

    @classmethod
    def dong(cls, l_max: float | None = None) -> "GammaSchedule":
        return cls("dong", l_max=l_max)

    @classmethod
    def bound_guided(cls, gamma0: float = DEFAULT_GAMMA0, c_scale: float = 1.0) -> "GammaSchedule":
        return cls("bound_guided", gamma0=gamma0, c_scale=c_scale)

    @classmethod
    def parse(cls, text: str) -> "GammaSchedule":
        """Parse labels such as ``fixed:0.99``, ``dong``, ``dong:100``, ``bound_guided:0.3``."""
        kind, _, arg = text.strip().partition(":")
        if kind == "fixed":
            return cls.fixed(float(arg))
        if kind == "dong":
            return cls.dong(float(arg) if arg else None)
        if kind == "bound_guided":
            if not arg:
                return cls.bound_guided()
            g0, _, scale = arg.partition(":")
            return cls.bound_guided(float(g0), float(scale) if scale else 1.0)
        return cls(kind)

    @property
    def is_hindsight(self) -> bool:
        return self.kind in HINDSIGHT_KINDS

    @property
    def label(self) -> str:
        if self.kind == "fixed":
            return f"fixed:{self.gamma:g}"
        if self.kind == "dong":
            return "dong" if self.l_max is None else f"dong:{self.l_max:g}"
        if self.kind == "bound_guided":
            suffix = "" if self.c_scale == 1.0 else f":{self.c_scale:g}"
            return f"bound_guided:{self.gamma0:g}{suffix}"
        return self.kind

    def select(
        self, *, t: int, m: int, alpha_t: float, sigma_t: float, s_count: int, a_count: int, gamma_eval: float
    ) -> float:
        """Discount for task ``t`` (1-based) given the learner's current state."""
        if self.kind == "fixed":
            return min(self.gamma, gamma_eval)
        if self.kind == "dong":
            l_max = self.l_max if self.l_max is not None else DEFAULT_L_MAX
            return dong_gamma(m, alpha_t, t, s_count, a_count, l_max, gamma_eval)
        if self.kind == "bound_guided":
            c = self.c_scale * constant_c(m, t, sigma_t)
            return bound_guided_gamma(c, self.gamma0, gamma_eval)
        raise InvalidInputError(f"{self.kind} is chosen in hindsight, not online")
