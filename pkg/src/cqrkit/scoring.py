"""Point predictions, deviation scores and coverage metrics from calibrated quantiles."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .conformal import CalibratedQuantiles, CalibrationTable, conformalize
from .net import QuantileEstimates

SCORE_MAX = 50


def _values(cq):
    if isinstance(cq, (CalibratedQuantiles, QuantileEstimates)):
        return cq.values
    return np.asarray(cq, dtype=float)


def point_estimate(cq):
    """Mean of the quantile values along the last axis.

    Unbounded values (from pairs the calibration set was too small to
    calibrate) are left out of the mean.
    """
    v = _values(cq)
    finite = np.isfinite(v)
    out = np.where(finite, v, 0.0).sum(axis=-1) / finite.sum(axis=-1)
    return out if np.ndim(out) else float(out)


def gap(cq, y):
    """Predicted minus true value; positive when the model predicts above the truth."""
    out = np.asarray(point_estimate(cq)) - np.asarray(y, dtype=float)
    return out if out.ndim else float(out)


def deviation_score(cq, y):
    """Signed score in [-50, 50] locating ``y`` within the calibrated quantiles.

    ``50 - j`` where ``j`` counts quantile values strictly below ``y``
    (clamped to [0, 100]). A target below every quantile scores +50 (the
    prediction overshoots: accelerated), one above every quantile -50, and a
    target at the median 0. Targets must be finite.
    """
    v = _values(cq)
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("deviation scores need finite targets")
    below = (v < y[..., None]).sum(axis=-1)
    out = SCORE_MAX - np.clip(below, 0, 2 * SCORE_MAX)
    return out.astype(int) if out.ndim else int(out)


def picp(intervals, ys):
    """Fraction of targets inside their closed interval.

    ``intervals`` is a sequence of ``(lower, upper)`` pairs or an ``(n, 2)`` array.
    """
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if ys.size == 0:
        raise ValueError("picp of an empty set")
    if iv.shape[0] != ys.size:
        raise ValueError("intervals and targets are not aligned")
    return float(np.mean((iv[:, 0] <= ys) & (ys <= iv[:, 1])))


def coverage(lower, upper, ys):
    """Per-column coverage fraction for ``(n, m)`` bounds and ``(n,)`` targets.

    One-dimensional bounds are treated as a single column.
    """
    ys = np.asarray(ys, dtype=float).reshape(-1, 1)
    if ys.size == 0:
        raise ValueError("coverage of an empty set")
    lower = np.asarray(lower, dtype=float).reshape(ys.size, -1)
    upper = np.asarray(upper, dtype=float).reshape(ys.size, -1)
    return ((lower <= ys) & (ys <= upper)).mean(axis=0)


def mad(preds, ys):
    preds = np.asarray(preds, dtype=float).reshape(-1)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if ys.size == 0:
        raise ValueError("mad of an empty set")
    if preds.size != ys.size:
        raise ValueError("predictions and targets are not aligned")
    return float(np.mean(np.abs(preds - ys)))


@dataclass
class PicpCurve:
    nominal: np.ndarray
    raw: np.ndarray
    conformal: np.ndarray
    n: int


def picp_curve(estimates, table: CalibrationTable, ys) -> PicpCurve:
    """Empirical coverage of raw and conformalized intervals at every calibrated level."""
    v = np.atleast_2d(_values(estimates))
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if ys.size == 0:
        raise ValueError("picp curve of an empty test set")
    raw = coverage(v[:, table.lower], v[:, table.upper], ys)
    lo, hi = conformalize(v, table).intervals()
    return PicpCurve(table.nominal.copy(), raw, coverage(lo, hi, ys), ys.size)


def score_histogram(scores):
    """Counts of each integer score from -50 to 50."""
    scores = np.asarray(scores, dtype=int).reshape(-1)
    return np.bincount(scores + SCORE_MAX, minlength=2 * SCORE_MAX + 1)


def format_report(curve: PicpCurve, table: CalibrationTable, summary: dict, scores=None) -> str:
    """Evaluation report as comma-separated blocks separated by blank lines.

    Block one has one row per calibrated level (nominal coverage, raw and
    conformal PICP, test size, guaranteed coverage range); block two the
    ``summary`` metrics; block three, if ``scores`` is given, the score
    histogram.
    """
    lo, hi = table.bounds()
    buf = io.StringIO()
    buf.write("nominal,raw_picp,conformal_picp,n,qhat,bound_lower,bound_upper\n")
    for i in range(len(curve.nominal)):
        buf.write(f"{curve.nominal[i]:.2f},{curve.raw[i]:.6f},{curve.conformal[i]:.6f},"
                  f"{curve.n},{table.qhat[i]:.6f},{lo[i]:.6f},{hi[i]:.6f}\n")
    buf.write("\nmetric,value\n")
    for key, value in summary.items():
        buf.write(f"{key},{value}\n")
    if scores is not None:
        buf.write("\nscore,count\n")
        for s, c in zip(range(-SCORE_MAX, SCORE_MAX + 1), score_histogram(scores)):
            buf.write(f"{s},{c}\n")
    return buf.getvalue()
