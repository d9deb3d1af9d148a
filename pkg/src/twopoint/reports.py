"""CSV emission for check reports.

Headers are fixed; floats carry 9 significant digits and rows are ordered
time-major, then by node index, so identical runs give identical bytes.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .barrier import ConditionReport
from .verify import CheckReport, TwoPointReport

TWO_POINT_HEADER = ("t", "worst", "xi", "yi")
GRADIENT_HEADER = ("t", "node", "grad", "bound", "ratio")
LIYAU_HEADER = ("t", "node", "lhs", "rhs", "margin")
BARRIER_HEADER = ("s", "t", "residual")
SUMMARY_HEADER = ("check", "pass", "worst", "tol")


@dataclass(frozen=True)
class SummaryRow:
    check: str
    passed: bool | None    # None marks a check skipped because a hypothesis failed
    worst: float | None
    tol: float | None


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def _rows(report):
    if isinstance(report, TwoPointReport):
        return TWO_POINT_HEADER, [
            (t, w, xi, yi) for t, w, (xi, yi) in zip(report.times, report.worst, report.pairs)]
    if isinstance(report, ConditionReport):
        rows = []
        for k, t in enumerate(report.t_grid):
            for i, s in enumerate(report.s_grid):
                rows.append((s, t, report.residual[k, i]))
        return BARRIER_HEADER, rows
    if isinstance(report, CheckReport):
        header = tuple(report.columns)
        if header not in (GRADIENT_HEADER, LIYAU_HEADER):
            raise ValueError(f"unexpected report columns {header}")
        cols = [report.table[c] for c in header]
        rows = [tuple(int(v) if c == "node" else v for c, v in zip(header, r))
                for r in zip(*cols)]
        return header, rows
    if isinstance(report, (list, tuple)) and all(isinstance(r, SummaryRow) for r in report):
        return SUMMARY_HEADER, [
            (r.check, "skipped" if r.passed is None else r.passed, r.worst, r.tol)
            for r in report]
    raise TypeError(f"cannot emit {type(report).__name__}")


def emit_report(report, path) -> Path:
    """Write ``report`` as CSV at ``path`` and return the path."""
    header, rows = _rows(report)
    return emit_table(header, rows, path)


def emit_table(header, rows, path) -> Path:
    """Write an ad-hoc table with the same number formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    return path
