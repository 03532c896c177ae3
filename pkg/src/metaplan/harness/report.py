"""Bound curves as CSV."""
from __future__ import annotations

from ..errors import InvalidInputError
from ..horizon import BoundParams, bound_curve
from .io import csv_bytes, write_csv

BOUND_FIELDS = ("theorem", "gamma", "bias_term", "uncertainty_term", "total")


def bound_rows(params: BoundParams, grid, log_factor: float = 1.0) -> list[dict]:
    """One row per (theorem, gamma): the single-task bound (1) and the meta-learned one (2)."""
    grid = list(grid)
    if not grid:
        raise InvalidInputError("grid must be non-empty")
    rows = []
    for theorem in (1, 2):
        rows.extend({"theorem": theorem} | row for row in bound_curve(params, grid, theorem, log_factor))
    return rows


def bound_report(params: BoundParams, grid, path=None, log_factor: float = 1.0) -> bytes:
    """CSV bytes of :func:`bound_rows`; also written atomically to ``path`` when given."""
    rows = bound_rows(params, grid, log_factor)
    if path is not None:
        write_csv(path, BOUND_FIELDS, rows)
    return csv_bytes(BOUND_FIELDS, rows)
