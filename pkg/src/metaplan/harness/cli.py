"""Command-line interface.

Config precedence is defaults < ``--config`` file < explicit flags. Exit
status is 0 on success, 2 for invalid input and 1 for runtime failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError
from ..horizon import DEFAULT_GAMMA_GRID, BoundParams
from ..meta_loop import TASK_KEY
from ..tasks import SIGMA_CONVENTIONS, SIGMA_REGIMES, sample_task
from .config import OUTPUT_ENV, ExperimentConfig
from .figures import FIGURE_IDS, emit_figures
from .io import atomic_write_text
from .report import bound_report
from .sweep import AggregateResult, build_distribution, run_stream, run_sweep

log = logging.getLogger("metaplan")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


# (flag, config field, type); the field name doubles as argparse dest.
_CONFIG_FLAGS = [
    ("--s-count", "s_count", int),
    ("--a-count", "a_count", int),
    ("--k-zeroed", "k_zeroed", int),
    ("--m", "m", int),
    ("--n-tasks", "n_tasks", int),
    ("--n-seeds", "n_seeds", int),
    ("--base-seed", "base_seed", int),
    ("--sigma-target", "sigma_target", float),
    ("--a0", "a0", float),
    ("--gamma-eval", "gamma_eval", float),
    ("--gamma-grid", "gamma_grid", _floats),
    ("--sigma-hat-init", "sigma_hat_init", float),
    ("--gamma0", "gamma0", float),
    ("--l-max", "l_max", float),
    ("--cap-sigma", "cap_sigma", float),
    ("--rmax", "rmax", float),
    ("--output-dir", "output_dir", str),
]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment config (overrides --config)")
    g.add_argument("--config", type=Path, help="JSON config file")
    for flag, dest, kind in _CONFIG_FLAGS:
        g.add_argument(flag, dest=dest, type=kind, default=argparse.SUPPRESS)
    g.add_argument("--sigma-regime", choices=sorted(SIGMA_REGIMES), default=argparse.SUPPRESS,
                   help="named sigma_target")
    g.add_argument("--variants", nargs="+", default=argparse.SUPPRESS)
    g.add_argument("--schedules", nargs="+", default=argparse.SUPPRESS,
                   help="e.g. fixed:0.99 dong bound_guided:0.3 best_fixed dynamic_best")
    g.add_argument("--sigma-convention", dest="sigma_convention", choices=SIGMA_CONVENTIONS,
                   default=argparse.SUPPRESS)


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data = json.loads(args.config.read_text()) if getattr(args, "config", None) else {}
    flags = {dest: getattr(args, dest) for _, dest, _ in _CONFIG_FLAGS if hasattr(args, dest)}
    for name in ("variants", "schedules", "sigma_convention"):
        if hasattr(args, name):
            flags[name] = getattr(args, name)
    if hasattr(args, "sigma_regime"):
        data.pop("sigma_target", None)
        data.pop("a0", None)
        data["sigma_regime"] = args.sigma_regime
    if "a0" in flags:
        data.pop("sigma_regime", None)
        data["sigma_target"] = None
    if "sigma_target" in flags:
        data.pop("sigma_regime", None)
        data["a0"] = None
    data.update(flags)
    return ExperimentConfig.from_dict(data)


def cmd_generate(args) -> int:
    config = config_from_args(args)
    rng = run_stream(config.base_seed + args.run_index)
    dist = build_distribution(config, rng)
    task = sample_task(dist, rng.child(TASK_KEY, args.task))
    summary = {
        "seed": config.base_seed + args.run_index,
        "a0": float(dist.concentration.max()),
        "sigma": dist.sigma,
        "sigma_convention": dist.sigma_convention,
        "mean_model": dist.mean.probs.tolist(),
        "task": args.task,
        "task_model": task.probs.tolist(),
        "max_deviation": float(np.abs(task.probs - dist.mean.probs).max()),
    }
    text = json.dumps(summary, indent=2)
    if args.out:
        atomic_write_text(args.out, text + "\n")
    else:
        print(text)
    return 0


def _finish_run(result, out, figures) -> None:
    if figures:
        for path in emit_figures(result, figures, out):
            log.info("wrote %s", path)


def cmd_run(args) -> int:
    config = config_from_args(args)
    out = Path(config.output_dir)
    result = run_sweep(config, out, jobs=args.jobs, label=args.label, save_records=args.records)
    log.info("wrote %s (%d runs)", out, result.n_runs)
    _finish_run(result, out, [f for f in args.figures if f != "fig4"])
    print(out)
    return 0


def _sweep_points(args, base: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    points = []
    if args.regimes:
        points += [(name, base.updated(sigma_target=SIGMA_REGIMES[name])) for name in args.regimes]
    if args.sigmas:
        points += [(f"sigma={s:g}", base.updated(sigma_target=s)) for s in args.sigmas]
    if args.m_values or args.t_values:
        for m in args.m_values or [base.m]:
            for t in args.t_values or [base.n_tasks]:
                points.append((f"m={m}_T={t}", base.updated(m=m, n_tasks=t)))
    if not points:
        raise InvalidInputError("sweep needs --regimes, --sigmas, --m-values or --t-values")
    return points


def cmd_sweep(args) -> int:
    base = config_from_args(args)
    root = Path(base.output_dir)
    results = {}
    for label, config in _sweep_points(args, base):
        out = root / label
        results[label] = run_sweep(config.updated(output_dir=str(out)), out, jobs=args.jobs, label=label)
        log.info("wrote %s", out)
    index = {label: str(root / label) for label in results}
    atomic_write_text(root / "sweep.json", json.dumps(index, indent=2) + "\n")
    if args.figures:
        if "fig4" in args.figures:
            emit_figures(results, "fig4", root)
        for label, res in results.items():
            _finish_run(res, root / label, [f for f in args.figures if f != "fig4"])
    print(root)
    return 0


def cmd_plot(args) -> int:
    results = {}
    for directory in args.results:
        res = AggregateResult.load(directory)
        results[res.label or Path(directory).name] = res
    out = Path(args.output_dir)
    if len(results) == 1:
        paths = emit_figures(next(iter(results.values())), args.figures, out)
    else:
        singles = [f for f in args.figures if f != "fig4"]
        if singles:
            raise InvalidInputError("with several result directories only fig4 can be drawn")
        paths = emit_figures(results, args.figures, out)
    for p in paths:
        print(p)
    return 0


def cmd_bounds(args) -> int:
    params = BoundParams(
        m=args.m, t_tasks=args.t_tasks, s_count=args.s_count, a_count=args.a_count, sigma=args.sigma,
        cap_sigma=args.cap_sigma, delta=args.delta, gamma_eval=args.gamma_eval, rmax=args.rmax,
    )
    grid = args.grid if args.grid is not None else [g for g in DEFAULT_GAMMA_GRID if g <= args.gamma_eval]
    data = bound_report(params, grid, args.out, args.log_factor)
    if args.out is None:
        sys.stdout.write(data.decode())
    else:
        print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metaplan",
        description="Planning with meta-learned transition priors and adaptive discounts.",
        epilog=f"Default output directory: ${OUTPUT_ENV}, else ./results.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="inspect a sampled task distribution", parents=[common])
    _add_config_flags(p)
    p.add_argument("--run-index", type=int, default=0)
    p.add_argument("--task", type=int, default=1, help="1-based task index to sample")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_generate)

    for name, func, help_text in (("run", cmd_run, "run a single config"),
                                  ("sweep", cmd_sweep, "run a grid of configs")):
        p = sub.add_parser(name, help=help_text, parents=[common])
        _add_config_flags(p)
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--figures", nargs="*", default=[], choices=FIGURE_IDS)
        p.set_defaults(func=func)
        if name == "run":
            p.add_argument("--label", default="")
            p.add_argument("--records", action="store_true", help="also write full run records (JSON lines)")
        else:
            p.add_argument("--regimes", nargs="+", choices=sorted(SIGMA_REGIMES))
            p.add_argument("--sigmas", type=float, nargs="+")
            p.add_argument("--m-values", type=int, nargs="+")
            p.add_argument("--t-values", type=int, nargs="+")

    p = sub.add_parser("plot", help="draw figures from stored results", parents=[common])
    p.add_argument("results", nargs="+", type=Path, help="result directories written by run/sweep")
    p.add_argument("--figures", nargs="+", choices=FIGURE_IDS, required=True)
    p.add_argument("--output-dir", type=Path, default=Path("."))
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("bounds", help="bound curves as CSV", parents=[common])
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--t-tasks", type=int, default=15)
    p.add_argument("--s-count", type=int, default=10)
    p.add_argument("--a-count", type=int, default=2)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--cap-sigma", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--gamma-eval", type=float, default=0.99)
    p.add_argument("--rmax", type=float, default=1.0)
    p.add_argument("--grid", type=_floats)
    p.add_argument("--log-factor", type=float, default=1.0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InvalidInputError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
