"""Strong-error estimates along a coupled step-size ladder and the fitted order."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDesign, InsufficientLevels, MismatchedPathCounts

log = logging.getLogger(__name__)

FIRST_ERR = math.sqrt(0.5)


@dataclass
class LevelRecord:
    k: int
    log2_dt: float
    raw_l2_diff: float
    err: float
    mc_stderr: float
    degenerate: bool = False


@dataclass
class FitResult:
    slope: float
    intercept: float
    residual: float


@dataclass
class ConvergenceReport:
    records: list
    norm_const: float
    method: str = ""
    paths: int = 0
    seed: int = 0
    fit: FitResult = None
    degenerate: bool = False

    @property
    def slope(self):
        return None if self.fit is None else self.fit.slope

    def err(self):
        return np.array([r.err for r in self.records])

    def log2_dt(self):
        return np.array([r.log2_dt for r in self.records])


def _mean(values):
    # exactly rounded, hence independent of the order of the paths
    return math.fsum(values) / len(values)


def estimate_errors(terminal_by_level, T=1.0, method="", seed=0, norm_const=None):
    """``err_k = log2(normConst * sqrt(mean |X^(k) - X^(k-1)|^2))`` for each level with a predecessor.

    ``normConst`` makes the first finite entry equal ``sqrt(1/2)`` unless given.
    Levels with zero difference are flagged degenerate and left out of the fit.
    """
    levels = sorted(terminal_by_level)
    if len(levels) < 2:
        raise InsufficientLevels("need at least two levels")
    if any(b != a + 1 for a, b in zip(levels, levels[1:])):
        raise InsufficientLevels("levels must be consecutive")
    counts = {np.asarray(terminal_by_level[k]).shape[0] for k in levels}
    if len(counts) != 1:
        raise MismatchedPathCounts(f"path counts differ across levels: {sorted(counts)}")
    paths = counts.pop()

    raw, stderr = [], []
    for k in levels[1:]:
        a = np.asarray(terminal_by_level[k], dtype=float).reshape(paths, -1)
        b = np.asarray(terminal_by_level[k - 1], dtype=float).reshape(paths, -1)
        q = np.sum((a - b) ** 2, axis=1)
        e_hat = _mean(q)
        var = math.fsum((q - e_hat) ** 2) / max(paths - 1, 1)
        se_e = math.sqrt(var / paths)
        raw.append(math.sqrt(e_hat))
        # delta method: d log2 sqrt(E) = dE / (2 E ln 2)
        stderr.append(se_e / (2.0 * e_hat * math.log(2.0)) if e_hat > 0 else float("nan"))

    nonzero = [r for r in raw if r > 0]
    degenerate = not nonzero
    if norm_const is None:
        norm_const = 2.0 ** FIRST_ERR / nonzero[0] if nonzero else 1.0
    records = []
    for k, r, se in zip(levels[1:], raw, stderr):
        if r > 0:
            err = math.log2(norm_const * r)
        else:
            err = float("nan")
            log.warning("level %d: zero difference to level %d, excluded from the fit", k, k - 1)
        records.append(LevelRecord(k, math.log2(T) - k, r, err, se, r == 0))

    report = ConvergenceReport(records, norm_const, method, paths, seed, degenerate=degenerate)
    usable = [rec for rec in records if not rec.degenerate]
    if len(usable) >= 3:
        report.fit = fit_order(report)
    return report


def fit_order(report_or_x, err=None):
    """Least-squares line of ``err_k`` against ``log2 dt``; the slope is the empirical order.

    Accepts a ConvergenceReport or two arrays ``(log2_dt, err)``.
    """
    if err is None:
        recs = [r for r in report_or_x.records if not r.degenerate and np.isfinite(r.err)]
        x = np.array([r.log2_dt for r in recs])
        y = np.array([r.err for r in recs])
    else:
        x = np.asarray(report_or_x, dtype=float)
        y = np.asarray(err, dtype=float)
        keep = np.isfinite(y)
        x, y = x[keep], y[keep]
    if x.size < 3:
        raise InsufficientLevels("need at least three finite error levels")
    if np.all(x == x[0]):
        raise DegenerateDesign("all step sizes are equal")
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    slope = float(np.dot(dx, y - ym) / np.dot(dx, dx))
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    return FitResult(slope, intercept, float(np.dot(resid, resid)))
