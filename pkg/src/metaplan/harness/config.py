"""Experiment configuration: defaults, validation and JSON round-trip."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigError, InvalidInputError
from ..horizon import DEFAULT_GAMMA0, DEFAULT_GAMMA_GRID, GammaSchedule
from ..meta_loop import VARIANTS
from ..tasks import SIGMA_CONVENTIONS, SIGMA_REGIMES

OUTPUT_ENV = "METAPLAN_OUTPUT_DIR"


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV, "results")


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: ``n_seeds`` runs of every variant under every schedule.

    Task similarity is set either directly through the Dirichlet mass
    ``a0`` or through ``sigma_target`` (solved per run for ``a0``).
    """

    s_count: int = 10
    a_count: int = 2
    k_zeroed: int = 5
    m: int = 5
    n_tasks: int = 15
    n_seeds: int = 100
    base_seed: int = 0
    sigma_target: float | None = SIGMA_REGIMES["strong"]
    a0: float | None = None
    gamma_eval: float = 0.99
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    variants: tuple[str, ...] = VARIANTS
    schedules: tuple[str, ...] = ("fixed:0.99",)
    sigma_convention: str = "stddev"
    sigma_hat_init: float | None = None
    gamma0: float = DEFAULT_GAMMA0
    l_max: float = 1.0
    cap_sigma: float = 1.0
    rmax: float = 1.0
    output_dir: str = field(default_factory=default_output_dir)

    def __post_init__(self):
        object.__setattr__(self, "gamma_grid", tuple(float(g) for g in self.gamma_grid))
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "schedules", tuple(self.schedules))
        problems = self.violations()
        if problems:
            raise ConfigError(problems)

    def violations(self) -> list[str]:
        out = []
        if self.s_count < 1 or self.a_count < 1:
            out.append("s_count and a_count must be positive")
        if not 0 <= self.k_zeroed < self.s_count:
            out.append(f"k_zeroed must satisfy 0 <= k_zeroed < s_count (got {self.k_zeroed}, {self.s_count})")
        if self.m < 1:
            out.append("m must be at least 1")
        if self.n_tasks < 1:
            out.append("n_tasks must be at least 1")
        if self.n_seeds < 1:
            out.append("n_seeds must be at least 1")
        if self.base_seed < 0:
            out.append("base_seed must be nonnegative")
        if (self.sigma_target is None) == (self.a0 is None):
            out.append("exactly one of sigma_target and a0 must be set")
        if self.sigma_target is not None and self.sigma_target <= 0:
            out.append("sigma_target must be positive")
        if self.a0 is not None and self.a0 <= 0:
            out.append("a0 must be positive")
        if not 0.0 < self.gamma_eval < 1.0:
            out.append("gamma_eval must lie in (0, 1)")
        if not self.gamma_grid:
            out.append("gamma_grid must be non-empty")
        elif min(self.gamma_grid) < 0 or max(self.gamma_grid) > self.gamma_eval:
            out.append("gamma_grid must lie within [0, gamma_eval]")
        elif len(set(self.gamma_grid)) != len(self.gamma_grid):
            out.append("gamma_grid entries must be distinct")
        if not self.variants:
            out.append("at least one variant is required")
        for v in self.variants:
            if v not in VARIANTS:
                out.append(f"unknown variant {v!r}")
        if not self.schedules:
            out.append("at least one schedule is required")
        for s in self.schedules:
            try:
                GammaSchedule.parse(s)
            except (InvalidInputError, ValueError) as exc:
                out.append(f"bad schedule {s!r}: {exc}")
        if self.sigma_convention not in SIGMA_CONVENTIONS:
            out.append(f"sigma_convention must be one of {SIGMA_CONVENTIONS}")
        if self.sigma_hat_init is not None and self.sigma_hat_init < 0:
            out.append("sigma_hat_init must be nonnegative")
        if not 0.0 <= self.gamma0 < 1.0:
            out.append("gamma0 must lie in [0, 1)")
        if self.l_max <= 0:
            out.append("l_max must be positive")
        if not 0.0 < self.cap_sigma <= 1.0:
            out.append("cap_sigma must lie in (0, 1]")
        if self.rmax <= 0:
            out.append("rmax must be positive")
        return out

    def gamma_schedules(self) -> list[GammaSchedule]:
        """Schedules with config-level defaults filled in for bare ``dong``/``bound_guided``."""
        out = []
        for text in self.schedules:
            sched = GammaSchedule.parse(text)
            if text.strip() == "dong":
                sched = GammaSchedule.dong(self.l_max)
            elif text.strip() == "bound_guided":
                sched = GammaSchedule.bound_guided(self.gamma0)
            out.append(sched)
        return out

    def to_dict(self) -> dict:
        data = asdict(self)
        for key in ("gamma_grid", "variants", "schedules"):
            data[key] = list(data[key])
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """Build from plain data; ``sigma_regime`` is accepted as a named ``sigma_target``."""
        data = dict(data)
        if "sigma_regime" in data:
            regime = data.pop("sigma_regime")
            if regime not in SIGMA_REGIMES:
                raise ConfigError([f"unknown sigma_regime {regime!r}; expected one of {sorted(SIGMA_REGIMES)}"])
            data["sigma_target"] = SIGMA_REGIMES[regime]
            data.setdefault("a0", None)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown config key {k!r}" for k in unknown])
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def updated(self, **changes) -> "ExperimentConfig":
        """Copy with ``changes`` applied; ``None`` values are ignored."""
        changes = {k: v for k, v in changes.items() if v is not None}
        if "a0" in changes:
            changes.setdefault("sigma_target", None)
        elif "sigma_target" in changes:
            changes.setdefault("a0", None)
        return replace(self, **changes)
