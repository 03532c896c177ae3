"""Seeded sweeps over variants and schedules, and their aggregation.

Run ``i`` of a sweep uses seed id ``base_seed + i``: it draws its own mean
model, reward table and task stream from that id, so runs are independent
and can be farmed out to worker processes in any order.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError
from ..meta_loop import RunRecord, run_variants
from ..tasks import MetaDistribution, RngStream, random_chain_mdp, random_rewards
from .config import ExperimentConfig
from .io import atomic_write_text, ensure_writable_dir, read_csv, write_csv

RAW_FIELDS = ("seed", "variant", "schedule", "task", "gamma", "loss", "chosen")
AGGREGATE_FIELDS = ("variant", "schedule", "task", "gamma", "mean_loss", "stderr", "n_runs", "mean_opt_gamma")
RAW_NAME, AGGREGATE_NAME, ECHO_NAME, RECORDS_NAME = "raw.csv", "aggregate.csv", "config.json", "records.jsonl"
CHOSEN = "chosen"

# Child keys of a run's stream; tasks and batches use 2 and 3 inside the meta loop.
MEAN_KEY, REWARD_KEY = 0, 1
ROOT_SEED = 0


def run_stream(seed_id: int) -> RngStream:
    return RngStream(ROOT_SEED, seed_id)


def build_distribution(config: ExperimentConfig, rng: RngStream) -> MetaDistribution:
    mean = random_chain_mdp(config.s_count, config.a_count, config.k_zeroed, rng.child(MEAN_KEY))
    if config.a0 is not None:
        return MetaDistribution(mean, config.a0, config.sigma_convention)
    return MetaDistribution.from_sigma(mean, config.sigma_target, config.sigma_convention)


def run_single(config: ExperimentConfig, run_index: int) -> tuple[dict, list[RunRecord]]:
    """Every (variant, schedule) record for one run, plus a summary of its task distribution."""
    seed_id = config.base_seed + run_index
    rng = run_stream(seed_id)
    dist = build_distribution(config, rng)
    rewards = random_rewards(config.s_count, config.a_count, rng.child(REWARD_KEY), config.rmax)
    records = run_variants(
        config.variants,
        dist,
        rewards,
        config.n_tasks,
        config.m,
        config.gamma_schedules(),
        config.gamma_grid,
        rng,
        gamma_eval=config.gamma_eval,
        sigma_hat_init=config.sigma_hat_init,
        cap_sigma=config.cap_sigma,
        seed=seed_id,
    )
    info = {"seed": seed_id, "a0": float(dist.concentration.max()), "sigma": dist.sigma}
    return info, list(records.values())


def _run_single_star(args):
    return run_single(*args)


def execute_runs(config: ExperimentConfig, jobs: int = 1) -> tuple[list[dict], list[RunRecord]]:
    """All runs of ``config`` in run-index order, whatever the worker count."""
    if jobs < 1:
        raise InvalidInputError("jobs must be at least 1")
    work = [(config, i) for i in range(config.n_seeds)]
    if jobs == 1:
        results = [run_single(*w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_single_star, work, chunksize=max(1, len(work) // (4 * jobs))))
    infos = [info for info, _ in results]
    records = [rec for _, recs in results for rec in recs]
    return infos, records


def _stderr(x: np.ndarray, axis: int = 0) -> np.ndarray:
    n = x.shape[axis]
    if n < 2:
        return np.full(np.delete(x.shape, axis), np.nan)
    return x.std(axis=axis, ddof=1) / np.sqrt(n)


def _std(x: np.ndarray, axis: int = 0) -> np.ndarray:
    n = x.shape[axis]
    if n < 2:
        return np.full(np.delete(x.shape, axis), np.nan)
    return x.std(axis=axis, ddof=1)


@dataclass
class Series:
    """Stacked per-run arrays of one (variant, schedule) pair."""

    seeds: np.ndarray  # (R,)
    loss: np.ndarray  # (R, T, G)
    chosen_gamma: np.ndarray  # (R, T)
    chosen_loss: np.ndarray  # (R, T)

    @property
    def n_runs(self) -> int:
        return self.loss.shape[0]


@dataclass
class AggregateResult:
    """Per-run loss grids of a sweep with the summary statistics derived from them.

    Standard errors use the sample standard deviation (``ddof=1``) and are
    NaN for a single run.
    """

    gammas: np.ndarray
    series: dict[tuple[str, str], Series]
    label: str = ""
    config: ExperimentConfig | None = field(default=None, repr=False)

    def __post_init__(self):
        counts = {s.n_runs for s in self.series.values()}
        if len(counts) > 1:
            raise InvalidInputError(f"run counts differ across series: {sorted(counts)}")

    @property
    def keys(self) -> list[tuple[str, str]]:
        return list(self.series)

    @property
    def n_runs(self) -> int:
        return next(iter(self.series.values())).n_runs if self.series else 0

    @property
    def n_tasks(self) -> int:
        return next(iter(self.series.values())).loss.shape[1] if self.series else 0

    def get(self, variant: str, schedule: str | None = None) -> Series:
        """Series for ``(variant, schedule)``; ``schedule=None`` takes the first one of the variant."""
        for (v, s), series in self.series.items():
            if v == variant and (schedule is None or s == schedule):
                return series
        have = ", ".join(f"({v}, {s})" for v, s in self.series) or "none"
        raise KeyError(f"no series for ({variant}, {schedule if schedule is not None else '*'}); available: {have}")

    def gamma_index(self, gamma: float) -> int:
        hits = np.flatnonzero(np.isclose(self.gammas, gamma, rtol=0.0, atol=1e-12))
        if not hits.size:
            raise InvalidInputError(f"gamma {gamma} is not on the grid")
        return int(hits[0])

    def optimal_gamma(self, variant: str, schedule: str | None = None) -> np.ndarray:
        """(R, T) grid argmin per run and task, ties to the smaller discount."""
        loss = self.get(variant, schedule).loss
        order = np.argsort(self.gammas, kind="stable")
        return self.gammas[order][np.argmin(loss[..., order], axis=2)]

    def min_loss(self, variant: str, schedule: str | None = None) -> np.ndarray:
        """(R, T) loss at each run's per-task optimal discount."""
        return self.get(variant, schedule).loss.min(axis=2)

    def loss_at(self, variant: str, gamma: float, schedule: str | None = None) -> np.ndarray:
        """(R, T) loss at one grid discount."""
        return self.get(variant, schedule).loss[:, :, self.gamma_index(gamma)]

    def aggregate_rows(self) -> list[dict]:
        rows = []
        for (variant, schedule), s in self.series.items():
            mean, se = s.loss.mean(axis=0), _stderr(s.loss)
            opt = self.optimal_gamma(variant, schedule).mean(axis=0)
            c_mean, c_se = s.chosen_loss.mean(axis=0), _stderr(s.chosen_loss)
            for t in range(s.loss.shape[1]):
                base = {"variant": variant, "schedule": schedule, "task": t + 1, "n_runs": s.n_runs}
                for j, gamma in enumerate(self.gammas):
                    rows.append(
                        base
                        | {
                            "gamma": float(gamma),
                            "mean_loss": float(mean[t, j]),
                            "stderr": float(se[t, j]),
                            "mean_opt_gamma": float(opt[t]),
                        }
                    )
                rows.append(
                    base
                    | {
                        "gamma": CHOSEN,
                        "mean_loss": float(c_mean[t]),
                        "stderr": float(c_se[t]),
                        "mean_opt_gamma": float(opt[t]),
                    }
                )
        return rows

    @classmethod
    def from_records(cls, records, label: str = "", config=None) -> "AggregateResult":
        if not records:
            raise InvalidInputError("no records to aggregate")
        gammas = records[0].gammas
        grouped: dict[tuple[str, str], list[RunRecord]] = {}
        for rec in records:
            if not np.array_equal(rec.gammas, gammas):
                raise InvalidInputError("records use different discount grids")
            grouped.setdefault((rec.variant, rec.schedule), []).append(rec)
        series = {}
        for key, recs in grouped.items():
            recs.sort(key=lambda r: r.seed)
            series[key] = Series(
                seeds=np.array([r.seed for r in recs]),
                loss=np.stack([r.per_task_loss for r in recs]),
                chosen_gamma=np.stack([r.chosen_gamma for r in recs]),
                chosen_loss=np.stack([r.chosen_loss for r in recs]),
            )
        return cls(np.array(gammas, dtype=float), series, label, config)

    @classmethod
    def from_raw_rows(cls, rows, gammas, label: str = "", config=None) -> "AggregateResult":
        """Rebuild per-run arrays from raw CSV rows (strings or numbers)."""
        gammas = np.asarray(gammas, dtype=float)
        col = {float(g): j for j, g in enumerate(gammas)}
        cells: dict[tuple[str, str], dict[int, dict]] = {}
        for row in rows:
            key = (row["variant"], row["schedule"])
            seed, task = int(row["seed"]), int(row["task"]) - 1
            gamma, loss, chosen = float(row["gamma"]), float(row["loss"]), int(row["chosen"])
            run = cells.setdefault(key, {}).setdefault(seed, {"grid": {}, "chosen": {}})
            if gamma in col:
                run["grid"][(task, col[gamma])] = loss
            if chosen:
                run["chosen"][task] = (gamma, loss)
        series = {}
        for key, runs in cells.items():
            seeds = sorted(runs)
            n_tasks = 1 + max(t for run in runs.values() for t, _ in run["grid"])
            loss = np.full((len(seeds), n_tasks, gammas.size), np.nan)
            cg = np.full((len(seeds), n_tasks), np.nan)
            cl = np.full((len(seeds), n_tasks), np.nan)
            for r, seed in enumerate(seeds):
                for (t, j), value in runs[seed]["grid"].items():
                    loss[r, t, j] = value
                for t, (g, value) in runs[seed]["chosen"].items():
                    cg[r, t], cl[r, t] = g, value
            if np.isnan(loss).any() or np.isnan(cl).any():
                raise InvalidInputError(f"raw rows for {key} are incomplete")
            series[key] = Series(np.array(seeds), loss, cg, cl)
        return cls(gammas, series, label, config)

    @classmethod
    def load(cls, directory) -> "AggregateResult":
        """Read a sweep directory written by :func:`run_sweep`."""
        directory = Path(directory)
        echo = json.loads((directory / ECHO_NAME).read_text())
        config = ExperimentConfig.from_dict(echo["config"])
        rows = read_csv(directory / RAW_NAME)
        return cls.from_raw_rows(rows, config.gamma_grid, echo.get("label", directory.name), config)


def raw_rows(records) -> list[dict]:
    return [row for rec in records for row in rec.long_rows()]


def run_sweep(
    config: ExperimentConfig,
    output_dir=None,
    *,
    jobs: int = 1,
    label: str = "",
    save_records: bool = False,
) -> AggregateResult:
    """Run every seed, variant and schedule of ``config`` and persist the results.

    Writes ``raw.csv``, ``aggregate.csv`` and ``config.json`` (the echoed
    config with sha256 hashes of both CSVs) under ``output_dir`` (default
    ``config.output_dir``); ``records.jsonl`` holds full run records when
    ``save_records`` is set. Every file is written atomically.
    """
    out = ensure_writable_dir(output_dir if output_dir is not None else config.output_dir)
    infos, records = execute_runs(config, jobs)
    result = AggregateResult.from_records(records, label, config)
    raw_hash = write_csv(out / RAW_NAME, RAW_FIELDS, raw_rows(records))
    agg_hash = write_csv(out / AGGREGATE_NAME, AGGREGATE_FIELDS, result.aggregate_rows())
    if save_records:
        atomic_write_text(out / RECORDS_NAME, "".join(rec.to_json() + "\n" for rec in records))
    echo = {
        "label": label,
        "config": config.to_dict(),
        "raw_sha256": raw_hash,
        "aggregate_sha256": agg_hash,
        "runs": infos,
    }
    atomic_write_text(out / ECHO_NAME, json.dumps(echo, indent=2, sort_keys=True) + "\n")
    return result
