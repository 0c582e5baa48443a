"""Slope fits, convergence reports and the on-disk table formats.

CSV tables have a header row and a fixed column order; floats are written
with ``repr`` so reruns are byte-identical.  Columns are whitespace-free so
the files can be plotted directly, e.g. ``plot 'final.csv' using 1:5`` with
``set datafile separator ','`` in gnuplot.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFit

ZERO_FLOOR = 1e-300


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float


def fit_slope(eps_list, norm_list) -> SlopeFit:
    """Least squares in (log eps, log norm)."""
    e = np.asarray(eps_list, dtype=float)
    n = np.asarray(norm_list, dtype=float)
    if len(e) < 3 or len(e) != len(n):
        raise ValueError("need at least three (eps, norm) pairs")
    if np.any(e <= 0):
        raise ValueError("eps values must be positive")
    if np.any(n <= ZERO_FLOOR):
        raise DegenerateFit("norm sequence contains zeros")
    x, y = np.log(e), np.log(n)
    M = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    res = float(np.sqrt(np.mean((M @ coef - y) ** 2)))
    return SlopeFit(float(coef[0]), float(coef[1]), res)


@dataclass
class QuantityCheck:
    name: str
    eps: list
    values: list
    target: float | None
    threshold: float | None
    kind: str = "slope"          # slope | max | min | decreasing | flag
    slope: float | None = None
    verdict: str = ""
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict in ("pass", "exact")


def slope_check(name: str, eps, values, threshold: float, target: float | None = None) -> QuantityCheck:
    q = QuantityCheck(name, list(map(float, eps)), list(map(float, values)), target, threshold)
    try:
        fit = fit_slope(eps, values)
    except DegenerateFit:
        q.verdict = "exact"
        return q
    q.slope = fit.slope
    q.verdict = "pass" if fit.slope >= threshold else "fail"
    return q


def bound_check(name: str, eps, values, threshold: float, upper: bool = True) -> QuantityCheck:
    kind = "max" if upper else "min"
    q = QuantityCheck(name, list(map(float, eps)), list(map(float, values)), None, threshold, kind)
    ok = all(v <= threshold for v in values) if upper else all(v >= threshold for v in values)
    q.verdict = "pass" if ok else "fail"
    return q


def decreasing_check(name: str, eps, values) -> QuantityCheck:
    """Values listed along a decreasing eps sweep must strictly decrease."""
    q = QuantityCheck(name, list(map(float, eps)), list(map(float, values)), None, None, "decreasing")
    q.verdict = "pass" if all(b < a for a, b in zip(values, values[1:])) else "fail"
    return q


def flag_check(name: str, eps, values, ok: bool, note: str = "") -> QuantityCheck:
    q = QuantityCheck(name, list(map(float, eps)), list(map(float, values)), None, None, "flag")
    q.verdict = "pass" if ok else "fail"
    q.note = note
    return q


@dataclass
class ConvergenceReport:
    suites: dict = field(default_factory=dict)     # suite name -> list of QuantityCheck

    def add(self, suite: str, check: QuantityCheck) -> None:
        self.suites.setdefault(suite, []).append(check)

    def suite_passed(self, suite: str) -> bool:
        return all(c.passed for c in self.suites.get(suite, []))

    @property
    def passed(self) -> bool:
        return all(self.suite_passed(s) for s in self.suites)

    def lines(self) -> list:
        out = []
        for suite, checks in self.suites.items():
            out.append(f"[{suite}] {'PASS' if self.suite_passed(suite) else 'FAIL'}")
            for c in checks:
                detail = f"slope={c.slope:.4f} threshold={c.threshold}" if c.slope is not None else (
                    f"threshold={c.threshold}" if c.threshold is not None else c.kind)
                vals = " ".join(f"{v:.4e}" for v in c.values)
                note = f" ({c.note})" if c.note else ""
                out.append(f"  {c.verdict.upper():5s} {c.name}: {detail}; values {vals}{note}")
        out.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return out


SLOPE_COLUMNS = ("suite", "quantity", "kind", "slope", "threshold", "verdict")


def write_slopes(report: ConvergenceReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SLOPE_COLUMNS)
        for suite, checks in report.suites.items():
            for c in checks:
                w.writerow([suite, c.name, c.kind, "" if c.slope is None else repr(c.slope),
                            "" if c.threshold is None else repr(float(c.threshold)), c.verdict])


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(rows: list, columns, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])


def write_field_csv(path, grid, fields: dict) -> None:
    """One row per node: x1, x2, then the named fields."""
    names = list(fields)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2"] + names)
        for i, a in enumerate(grid.x1):
            for j, b in enumerate(grid.x2):
                w.writerow([repr(float(a)), repr(float(b))] + [repr(float(fields[k][i, j])) for k in names])


def safe_ratio(a: float, b: float) -> float:
    if a == 0:
        return 0.0
    return a / b if b > 0 else math.inf
