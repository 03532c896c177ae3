"""SVG figure recipes.

Each recipe fixes which series it draws and which error bars it uses:

========  ==========================================================  ==========
recipe    content                                                     error bar
========  ==========================================================  ==========
fig3a     per-task loss at ``gamma_eval`` for each variant            1 std
fig3b     ada-POMRL loss against guidance discount, one curve per     1 stderr
          task, marker at each curve's argmin
fig3c     ada-POMRL minimum loss (left axis) and optimal discount     1 std
          (right axis) per task
fig4      one column per similarity regime: per-task loss at          1 std
          ``gamma_eval`` (top) and ada-POMRL loss curves (bottom)
fig5      per-task loss of each discount schedule (left) and its      1 stderr
          running task average (right)
========  ==========================================================  ==========

All series are validated before anything is drawn, so a missing series
never leaves a partial file behind.
"""
from __future__ import annotations

import io
from collections.abc import Mapping, Sequence
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from ..errors import InvalidInputError
from .io import atomic_write_bytes
from .sweep import AggregateResult

FIGURE_IDS = ("fig3a", "fig3b", "fig3c", "fig4", "fig5")
ERROR_BARS = {"fig3a": "std", "fig3b": "stderr", "fig3c": "std", "fig4": "std", "fig5": "stderr"}

VARIANT_ORDER = ("oracle_prior", "pomrl_known_sigma", "ada_pomrl", "no_meta", "aggregating")
VARIANT_LABELS = {
    "oracle_prior": "Oracle prior",
    "pomrl_known_sigma": "POMRL",
    "ada_pomrl": "ada-POMRL",
    "no_meta": "Without meta-learning",
    "aggregating": "Aggregating",
}
ADA = "ada_pomrl"
DEFAULT_CURVE_TASKS = (1, 2, 3, 5, 10, 15)
SCHEDULE_VARIANT = "pomrl_known_sigma"


def _spread(x: np.ndarray, kind: str) -> np.ndarray:
    n = x.shape[0]
    if n < 2:
        return np.zeros(x.shape[1:])
    sd = x.std(axis=0, ddof=1)
    return sd if kind == "std" else sd / np.sqrt(n)


def _bar_label(kind: str) -> str:
    return "error bars: 1 std" if kind == "std" else "error bars: 1 stderr"


def _svg_bytes(fig: Figure) -> bytes:
    buf = io.BytesIO()
    # fixed salt keeps clip-path ids stable between runs
    with matplotlib.rc_context({"svg.hashsalt": "metaplan"}):
        fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    return buf.getvalue()


def _check_variants(result: AggregateResult, variants: Sequence[str], schedule: str | None = None) -> None:
    if not variants:
        raise InvalidInputError("empty series request")
    missing = []
    for v in variants:
        try:
            result.get(v, schedule)
        except KeyError:
            missing.append(f"({v}, {schedule if schedule is not None else '*'})")
    if missing:
        raise KeyError(f"result {result.label or '<unnamed>'} is missing series: {', '.join(missing)}")


def _default_variants(result: AggregateResult) -> list[str]:
    present = {v for v, _ in result.keys}
    return [v for v in VARIANT_ORDER if v in present]


def _task_axis(n_tasks: int) -> np.ndarray:
    return np.arange(1, n_tasks + 1)


def _draw_per_task(ax, result: AggregateResult, variants, gamma: float, bars: str) -> None:
    x = _task_axis(result.n_tasks)
    for v in variants:
        loss = result.loss_at(v, gamma)
        ax.errorbar(x, loss.mean(axis=0), yerr=_spread(loss, bars), marker="o", ms=4, capsize=3,
                    label=VARIANT_LABELS.get(v, v))
    ax.set_xlabel("task")
    ax.set_ylabel(f"planning loss at gamma = {gamma:g}")
    ax.legend(fontsize=8, title=_bar_label(bars), title_fontsize=8)


def _draw_curves(ax, result: AggregateResult, tasks, bars: str, variant: str = ADA) -> None:
    loss = result.get(variant).loss
    for t in tasks:
        rows = loss[:, t - 1, :]
        mean = rows.mean(axis=0)
        line = ax.errorbar(result.gammas, mean, yerr=_spread(rows, bars), capsize=2, label=f"task {t}")
        best = int(np.argmin(mean))
        ax.plot(result.gammas[best], mean[best], marker="*", ms=12, color=line[0].get_color(), linestyle="none")
    ax.set_xlabel("guidance discount gamma")
    ax.set_ylabel("planning loss")
    ax.legend(fontsize=8, title=_bar_label(bars) + "; star = argmin", title_fontsize=8)


def _curve_tasks(result: AggregateResult, tasks) -> list[int]:
    if tasks is None:
        tasks = [t for t in DEFAULT_CURVE_TASKS if t <= result.n_tasks]
        if result.n_tasks not in tasks:
            tasks.append(result.n_tasks)
    tasks = sorted(set(int(t) for t in tasks))
    if not tasks:
        raise InvalidInputError("empty series request")
    bad = [t for t in tasks if not 1 <= t <= result.n_tasks]
    if bad:
        raise KeyError(f"tasks {bad} are outside 1..{result.n_tasks}")
    return tasks


def fig3a(result: AggregateResult, variants=None, gamma: float | None = None) -> Figure:
    variants = _default_variants(result) if variants is None else list(variants)
    _check_variants(result, variants)
    gamma = float(result.gammas.max()) if gamma is None else gamma
    fig = Figure(figsize=(6, 4))
    _draw_per_task(fig.add_subplot(), result, variants, gamma, ERROR_BARS["fig3a"])
    return fig


def fig3b(result: AggregateResult, tasks=None) -> Figure:
    _check_variants(result, [ADA])
    tasks = _curve_tasks(result, tasks)
    fig = Figure(figsize=(6, 4))
    _draw_curves(fig.add_subplot(), result, tasks, ERROR_BARS["fig3b"])
    return fig


def fig3c(result: AggregateResult) -> Figure:
    _check_variants(result, [ADA])
    bars = ERROR_BARS["fig3c"]
    x = _task_axis(result.n_tasks)
    best_loss, best_gamma = result.min_loss(ADA), result.optimal_gamma(ADA)
    fig = Figure(figsize=(6, 4))
    left = fig.add_subplot()
    right = left.twinx()
    left.errorbar(x, best_loss.mean(axis=0), yerr=_spread(best_loss, bars), marker="o", ms=4, capsize=3,
                  color="tab:blue", label="minimum planning loss")
    right.errorbar(x, best_gamma.mean(axis=0), yerr=_spread(best_gamma, bars), marker="s", ms=4, capsize=3,
                   color="tab:red", label="optimal gamma")
    left.set_xlabel("task")
    left.set_ylabel("minimum planning loss", color="tab:blue")
    right.set_ylabel("empirically optimal gamma", color="tab:red")
    left.set_title(_bar_label(bars), fontsize=8)
    return fig


def fig4(results: Mapping[str, AggregateResult], variants=None, tasks=None) -> Figure:
    if not results:
        raise InvalidInputError("empty series request")
    for res in results.values():
        _check_variants(res, _default_variants(res) if variants is None else list(variants))
        _check_variants(res, [ADA])
    bars = ERROR_BARS["fig4"]
    fig = Figure(figsize=(4.5 * len(results), 7))
    axes = fig.subplots(2, len(results), squeeze=False)
    for col, (label, res) in enumerate(results.items()):
        chosen = _default_variants(res) if variants is None else list(variants)
        _draw_per_task(axes[0, col], res, chosen, float(res.gammas.max()), bars)
        axes[0, col].set_title(label)
        _draw_curves(axes[1, col], res, _curve_tasks(res, tasks), bars)
    return fig


def fig5(result: AggregateResult, schedules=None, variant: str = SCHEDULE_VARIANT) -> Figure:
    present = [s for v, s in result.keys if v == variant]
    schedules = present if schedules is None else list(schedules)
    if not schedules:
        raise InvalidInputError("empty series request")
    missing = [f"({variant}, {s})" for s in schedules if (variant, s) not in result.series]
    if missing:
        raise KeyError(f"result {result.label or '<unnamed>'} is missing series: {', '.join(missing)}")
    bars = ERROR_BARS["fig5"]
    x = _task_axis(result.n_tasks)
    fig = Figure(figsize=(11, 4))
    per_task, running = fig.subplots(1, 2)
    for s in schedules:
        loss = result.series[(variant, s)].chosen_loss
        avg = np.cumsum(loss, axis=1) / x
        per_task.errorbar(x, loss.mean(axis=0), yerr=_spread(loss, bars), marker="o", ms=3, capsize=2, label=s)
        running.errorbar(x, avg.mean(axis=0), yerr=_spread(avg, bars), marker="o", ms=3, capsize=2, label=s)
    per_task.set_xlabel("task")
    per_task.set_ylabel("planning loss")
    running.set_xlabel("task")
    running.set_ylabel("task-averaged planning loss")
    running.legend(fontsize=8, title=_bar_label(bars), title_fontsize=8)
    return fig


_RECIPES = {"fig3a": fig3a, "fig3b": fig3b, "fig3c": fig3c, "fig4": fig4, "fig5": fig5}


def emit_figures(result, which, output_dir, **options) -> list[Path]:
    """Render one or more recipes to ``<output_dir>/<id>.svg``.

    ``result`` is an :class:`AggregateResult`, or for ``fig4`` a mapping of
    regime label to result. Every requested figure is built before any file
    is written.
    """
    ids = [which] if isinstance(which, str) else list(which)
    if not ids:
        raise InvalidInputError("no figures requested")
    unknown = [w for w in ids if w not in _RECIPES]
    if unknown:
        raise InvalidInputError(f"unknown figure ids {unknown}; expected some of {FIGURE_IDS}")
    rendered = []
    for fid in ids:
        if fid == "fig4":
            source = result if isinstance(result, Mapping) else {result.label or "result": result}
        elif isinstance(result, Mapping):
            if len(result) != 1:
                raise InvalidInputError(f"{fid} takes a single result, got {len(result)}")
            source = next(iter(result.values()))
        else:
            source = result
        rendered.append((fid, _svg_bytes(_RECIPES[fid](source, **options.get(fid, {})))))
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [atomic_write_bytes(out / f"{fid}.svg", data) for fid, data in rendered]
