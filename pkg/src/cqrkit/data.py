"""Tabular data handling: CSV ingestion, scaling, splits and synthetic tasks."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ZERO_VARIANCE = 1e-12


class DataError(ValueError):
    """Malformed or unusable input data.

    ``row`` is the 1-based data row (header excluded) and ``column`` the
    column name, when the problem can be pinned to a location.
    """

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


# ---------------------------------------------------------------------------
# Standard normal helpers

# Acklam's rational approximation to the normal quantile function.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425

_erfc = np.frompyfunc(math.erfc, 1, 1)


def norm_cdf(z):
    """Standard normal CDF, evaluated through the complementary error function."""
    z = np.asarray(z, dtype=float)
    out = 0.5 * np.asarray(_erfc(-z / math.sqrt(2.0)), dtype=float)
    return out if out.ndim else float(out)


def norm_sf(z):
    """Standard normal survival function ``1 - norm_cdf(z)`` without cancellation."""
    z = np.asarray(z, dtype=float)
    out = 0.5 * np.asarray(_erfc(z / math.sqrt(2.0)), dtype=float)
    return out if out.ndim else float(out)


def norm_ppf(p):
    """Inverse of the standard normal CDF.

    Uses the Acklam rational approximation (relative error about 1e-9)
    followed by one Halley correction step, which brings the result to
    near machine precision. ``p = 0`` and ``p = 1`` map to -inf and +inf.

    Parameters
    ----------
    p : float or array_like
        Probabilities in [0, 1].

    Returns
    -------
    float or ndarray
        ``z`` such that ``norm_cdf(z) == p``.
    """
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("probabilities must lie in [0, 1]")
    z = np.empty_like(p)
    z[p == 0] = -np.inf
    z[p == 1] = np.inf

    inner = (p > 0) & (p < 1)
    pm = p[inner]
    zm = np.empty_like(pm)

    lo = pm < _P_LOW
    hi = pm > 1 - _P_LOW
    mid = ~(lo | hi)

    q = pm[mid] - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1
    zm[mid] = num / den

    for mask, sign, tail in ((lo, 1.0, pm[lo]), (hi, -1.0, 1 - pm[hi])):
        q = np.sqrt(-2 * np.log(tail))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1
        zm[mask] = sign * num / den

    # Halley step on cdf(z) - p, evaluated in whichever tail avoids cancellation
    upper = zm > 0
    err = np.where(upper, (1 - pm) - np.asarray(norm_sf(zm)), np.asarray(norm_cdf(zm)) - pm)
    u = err * math.sqrt(2 * math.pi) * np.exp(zm * zm / 2)
    zm = zm - u / (1 + zm * u / 2)

    z[inner] = zm
    return z if z.ndim else float(z)


# ---------------------------------------------------------------------------
# Datasets


@dataclass
class Dataset:
    """Feature matrix, targets and optional group labels.

    ``targets`` is None when the source carried no target column; individual
    missing targets (prediction inputs) are NaN.
    """

    features: np.ndarray
    targets: np.ndarray | None
    groups: np.ndarray | None = None
    feature_names: list[str] = field(default_factory=list)
    target_name: str = "y"
    group_name: str | None = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        n, d = self.features.shape
        if n < 1:
            raise DataError("dataset has no rows")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain non-finite values")
        if self.targets is not None:
            self.targets = np.asarray(self.targets, dtype=float).reshape(-1)
            if self.targets.shape[0] != n:
                raise DataError(f"{self.targets.shape[0]} targets for {n} rows")
        if self.groups is not None:
            self.groups = np.asarray(self.groups, dtype=str).reshape(-1)
            if self.groups.shape[0] != n:
                raise DataError(f"{self.groups.shape[0]} group labels for {n} rows")
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(d)]
        if len(self.feature_names) != d:
            raise DataError("feature_names does not match the feature width")

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            self.features[index],
            None if self.targets is None else self.targets[index],
            None if self.groups is None else self.groups[index],
            list(self.feature_names),
            self.target_name,
            self.group_name,
        )


def load_csv(path, target_column, group_column=None, require_target=True) -> Dataset:
    """Read a comma-separated file with a header row into a :class:`Dataset`.

    Every column other than the target and group column is parsed as a
    numeric feature. Empty target cells are accepted (as NaN) only when
    ``require_target`` is False; empty feature cells are always rejected.
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [r for r in reader if r]

    if target_column not in header:
        if require_target:
            raise DataError(f"target column {target_column!r} not found in {path}",
                            column=target_column)
        t_idx = None
    else:
        t_idx = header.index(target_column)
    g_idx = None
    if group_column is not None:
        if group_column not in header:
            raise DataError(f"group column {group_column!r} not found in {path}",
                            column=group_column)
        g_idx = header.index(group_column)
    f_idx = [j for j in range(len(header)) if j not in (t_idx, g_idx)]
    if not f_idx:
        raise DataError(f"{path} has no feature columns")
    if not rows:
        raise DataError(f"{path} has no data rows")

    X = np.empty((len(rows), len(f_idx)))
    y = np.full(len(rows), np.nan) if t_idx is not None else None
    groups = [] if g_idx is not None else None
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"row {i} has {len(row)} fields, expected {len(header)}", row=i)
        for out_j, j in enumerate(f_idx):
            X[i - 1, out_j] = _parse_cell(row[j], i, header[j])
        if t_idx is not None:
            cell = row[t_idx].strip()
            if cell or require_target:
                y[i - 1] = _parse_cell(cell, i, header[t_idx])
        if groups is not None:
            groups.append(row[g_idx].strip())

    return Dataset(X, y, None if groups is None else np.array(groups, dtype=str),
                   [header[j] for j in f_idx], target_column, group_column)


def _parse_cell(cell, row, column):
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"non-numeric value {cell!r} at row {row}, column {column!r}",
                        row=row, column=column) from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {cell!r} at row {row}, column {column!r}",
                        row=row, column=column)
    return value


def write_csv(dataset: Dataset, path) -> None:
    """Write ``dataset`` in the format :func:`load_csv` reads.

    Floats are written with ``repr`` so a reload is exact.
    """
    header = list(dataset.feature_names)
    if dataset.targets is not None:
        header.append(dataset.target_name)
    if dataset.groups is not None:
        header.append(dataset.group_name or "group")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.features[i]]
            if dataset.targets is not None:
                t = dataset.targets[i]
                row.append("" if np.isnan(t) else repr(float(t)))
            if dataset.groups is not None:
                row.append(dataset.groups[i])
            w.writerow(row)


# ---------------------------------------------------------------------------
# Scaling


@dataclass
class ScalerParams:
    """Column statistics from the fitting split; ``keep`` lists the retained columns."""

    keep: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self):
        return {"keep": self.keep.tolist(), "mean": self.mean.tolist(),
                "std": self.std.tolist(), "std_convention": "population"}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["keep"], dtype=int), np.asarray(d["mean"], dtype=float),
                   np.asarray(d["std"], dtype=float))


def fit_scaler(train: Dataset) -> ScalerParams:
    """Fit a standard scaler on training rows, dropping zero-variance columns."""
    X = train.features
    var = X.var(axis=0)
    keep = np.flatnonzero(var >= ZERO_VARIANCE)
    if keep.size == 0:
        raise DataError("every feature column has zero variance")
    return ScalerParams(keep, X[:, keep].mean(axis=0), np.sqrt(var[keep]))


def apply_scaler(params: ScalerParams, dataset: Dataset) -> Dataset:
    if dataset.n_features <= params.keep.max():
        raise DataError(f"dataset has {dataset.n_features} columns, scaler expects "
                        f"at least {params.keep.max() + 1}")
    X = (dataset.features[:, params.keep] - params.mean) / params.std
    names = [dataset.feature_names[j] for j in params.keep]
    return Dataset(X, dataset.targets, dataset.groups, names,
                   dataset.target_name, dataset.group_name)


# ---------------------------------------------------------------------------
# Splits


@dataclass
class SplitPlan:
    seed: int
    train: np.ndarray
    calibration: np.ndarray
    test: np.ndarray


def split(n, cal_size=1000, test_fraction=0.0, seed=0) -> SplitPlan:
    """Shuffle ``range(n)`` and cut it into disjoint test, calibration and train parts.

    The test part holds ``round(test_fraction * n)`` rows; the training part
    gets whatever remains and must be non-empty.
    """
    if not 0 <= test_fraction < 1:
        raise ValueError("test_fraction must lie in [0, 1)")
    if cal_size < 1:
        raise ValueError("cal_size must be at least 1")
    n_test = int(round(test_fraction * n))
    if cal_size + n_test >= n:
        raise DataError(f"{n} rows cannot hold {cal_size} calibration and {n_test} "
                        "test rows plus a training set")
    perm = np.random.default_rng(seed).permutation(n)
    return SplitPlan(
        seed,
        train=np.sort(perm[n_test + cal_size:]),
        calibration=np.sort(perm[n_test:n_test + cal_size]),
        test=np.sort(perm[:n_test]),
    )


def kfold(n, k, seed=0) -> list[np.ndarray]:
    """Held-out index sets of a shuffled k-fold partition; sizes differ by at most one."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"cannot cut {n} rows into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def grouped_folds(groups) -> list[np.ndarray]:
    """One held-out fold per distinct label, in order of first appearance."""
    groups = np.asarray(groups)
    labels = list(dict.fromkeys(groups.tolist()))
    if len(labels) < 2:
        raise ValueError("grouped folds need at least two distinct groups")
    return [np.flatnonzero(groups == g) for g in labels]


# ---------------------------------------------------------------------------
# Synthetic heteroscedastic task


@dataclass(frozen=True)
class SyntheticTask:
    """``y | x ~ Normal(10 x0, (0.5 + x0)^2)`` with ``x ~ Uniform[0, 1]^d``.

    Only the first column carries signal; the others are nuisance inputs.
    """

    n_features: int = 1
    slope: float = 10.0
    sigma0: float = 0.5
    sigma1: float = 1.0

    def mu(self, x0):
        return self.slope * np.asarray(x0, dtype=float)

    def sigma(self, x0):
        return self.sigma0 + self.sigma1 * np.asarray(x0, dtype=float)

    def true_quantile(self, x0, tau):
        """Conditional ``tau``-quantile at signal value ``x0`` (broadcasts)."""
        return self.mu(x0) + self.sigma(x0) * norm_ppf(tau)

    def sample(self, n, seed) -> Dataset:
        if n < 1:
            raise ValueError("n must be at least 1")
        rng = np.random.default_rng(seed)
        X = rng.uniform(0.0, 1.0, size=(n, self.n_features))
        y = self.mu(X[:, 0]) + self.sigma(X[:, 0]) * rng.standard_normal(n)
        return Dataset(X, y)

    def describe(self, seed=None):
        return {
            "family": "normal",
            "x": f"uniform[0,1]^{self.n_features}, signal in x0",
            "mu": f"{self.slope!r} * x0",
            "sigma": f"{self.sigma0!r} + {self.sigma1!r} * x0",
            "slope": self.slope,
            "sigma0": self.sigma0,
            "sigma1": self.sigma1,
            "n_features": self.n_features,
            "seed": seed,
        }


def synth_heteroscedastic(n, seed=0, n_features=1):
    """Draw ``n`` rows of the synthetic task; returns ``(dataset, task)``."""
    task = SyntheticTask(n_features=n_features)
    return task.sample(n, seed), task


def write_oracle(task: SyntheticTask, path, seed=None) -> None:
    Path(path).write_text(json.dumps(task.describe(seed), indent=2, sort_keys=True) + "\n")
