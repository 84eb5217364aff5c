"""Split-conformal calibration of symmetric quantile pairs.

Each pair of levels ``(tau_k, 1 - tau_k)`` brackets a central interval with
miscoverage ``alpha_k = 2 tau_k``. A held-out calibration set yields one
additive constant per pair; widening (or narrowing) the pair by it gives
marginal coverage in ``(1 - alpha_k, 1 - alpha_k + 1/(n + 1)]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .net import QuantileEstimates, QuantileGrid


def conformity_score(lower, upper, y):
    """Signed distance of ``y`` outside ``[lower, upper]``; negative inside."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.maximum(lower - y, y - upper)
    return out if out.ndim else float(out)


def order_index(n, alpha):
    """1-based rank ``ceil((n + 1)(1 - alpha))`` of the calibration score."""
    # rounding strips float noise such as 11 * 0.9 = 9.900000000000002
    return math.ceil(round((n + 1) * (1 - alpha), 9))


def calibration_constant(scores, alpha):
    """The ``ceil((n + 1)(1 - alpha))``-th smallest score.

    Returns ``inf`` when that rank exceeds ``n``: the calibration set is too
    small for the requested coverage and the interval becomes unbounded.
    Ties are kept (order statistic of the multiset).
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    n = scores.size
    if n == 0:
        raise ValueError("calibration needs at least one score")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    k = order_index(n, alpha)
    if k > n:
        return math.inf
    return float(np.partition(scores, k - 1)[k - 1])


def coverage_bound(n, alpha):
    """Lower (exclusive) and upper (inclusive) marginal coverage for ``n`` calibration points."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return 1 - alpha, 1 - alpha + 1 / (1 + n)


@dataclass(eq=False)
class CalibrationTable:
    """Per-pair calibration constants.

    Attributes
    ----------
    n : int
        Calibration set size.
    lower, upper : ndarray of int
        Grid indices of the lower and upper member of each pair.
    alpha : ndarray
        Nominal miscoverage of each pair.
    qhat : ndarray
        Calibration constants; ``inf`` marks a pair whose rank exceeded ``n``.
    grid : QuantileGrid
    """

    n: int
    lower: np.ndarray
    upper: np.ndarray
    alpha: np.ndarray
    qhat: np.ndarray
    grid: QuantileGrid

    @property
    def infinite(self):
        return np.isinf(self.qhat)

    @property
    def nominal(self):
        return 1 - self.alpha

    def bounds(self):
        """Guaranteed coverage range of every pair as two arrays."""
        lo = 1 - self.alpha
        return lo, lo + 1 / (1 + self.n)

    def pair_for_alpha(self, alpha):
        hits = np.flatnonzero(np.isclose(self.alpha, alpha, rtol=0, atol=1e-9))
        if hits.size == 0:
            raise KeyError(f"no calibrated pair with alpha={alpha}")
        return int(hits[0])

    def to_dict(self):
        return {
            "n": int(self.n),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "alpha": self.alpha.tolist(),
            # JSON has no infinity; null marks an unbounded pair
            "qhat": [None if math.isinf(q) else q for q in self.qhat.tolist()],
        }

    @classmethod
    def from_dict(cls, d, grid: QuantileGrid):
        qhat = np.array([math.inf if q is None else q for q in d["qhat"]], dtype=float)
        return cls(int(d["n"]), np.asarray(d["lower"], dtype=int),
                   np.asarray(d["upper"], dtype=int), np.asarray(d["alpha"], dtype=float),
                   qhat, grid)


@dataclass(eq=False)
class CalibratedQuantiles:
    """Conformalized quantile values, sorted along the last axis."""

    values: np.ndarray
    grid: QuantileGrid
    table: CalibrationTable

    def intervals(self):
        """``(lower, upper)`` arrays with one column per calibrated pair."""
        return self.values[..., self.table.lower], self.values[..., self.table.upper]


def _values(est):
    if isinstance(est, QuantileEstimates):
        return est.values, est.grid
    return np.asarray(est, dtype=float), None


def build_table(cal_estimates, cal_targets, grid: QuantileGrid | None = None) -> CalibrationTable:
    """Calibrate every symmetric pair of ``grid`` on a held-out set.

    ``cal_estimates`` holds one row of quantile estimates per calibration
    subject, aligned with ``cal_targets``. Endpoint levels (0 and 1) have no
    finite miscoverage and are left uncalibrated.
    """
    values, est_grid = _values(cal_estimates)
    grid = grid or est_grid or QuantileGrid()
    values = np.atleast_2d(values)
    y = np.asarray(cal_targets, dtype=float).reshape(-1)
    if y.size == 0:
        raise ValueError("calibration set is empty")
    if values.shape != (y.size, len(grid)):
        raise ValueError(f"estimates of shape {values.shape} do not match "
                         f"{y.size} targets on a {len(grid)}-level grid")
    pairs = grid.pairs()
    lower = np.array([k for k, _ in pairs])
    upper = np.array([j for _, j in pairs])
    alpha = 2 * grid.levels[lower]
    scores = conformity_score(values[:, lower], values[:, upper], y[:, None])
    qhat = np.array([calibration_constant(scores[:, i], a) for i, a in enumerate(alpha)])
    return CalibrationTable(y.size, lower, upper, alpha, qhat, grid)


def conformalize(est, table: CalibrationTable) -> CalibratedQuantiles:
    """Shift each calibrated pair outward by its constant, then sort.

    Lower members move down by ``qhat``, upper members up; uncalibrated
    levels pass through, except that the two endpoint levels are pushed out
    to the calibrated extremes if a widened pair overtakes them. Sorting then
    repairs any crossing the shifts create.
    """
    values, grid = _values(est)
    if grid is not None and grid != table.grid:
        raise ValueError("estimates and calibration table use different grids")
    if values.shape[-1] != len(table.grid):
        raise ValueError(f"expected {len(table.grid)} quantile values, got {values.shape[-1]}")
    out = values.copy()
    out[..., table.lower] = values[..., table.lower] - table.qhat
    out[..., table.upper] = values[..., table.upper] + table.qhat
    # without this, sorting could slot an endpoint into a calibrated pair's position
    out[..., 0] = out.min(axis=-1)
    out[..., -1] = out.max(axis=-1)
    return CalibratedQuantiles(np.sort(out, axis=-1), table.grid, table)
