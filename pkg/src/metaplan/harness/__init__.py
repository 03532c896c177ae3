"""Experiment harness: configs, seeded sweeps, CSV output, figures and the CLI."""
from .config import ExperimentConfig
from .figures import FIGURE_IDS, emit_figures
from .report import bound_report
from .sweep import AggregateResult, run_sweep

__all__ = ["AggregateResult", "ExperimentConfig", "FIGURE_IDS", "bound_report", "emit_figures", "run_sweep"]
