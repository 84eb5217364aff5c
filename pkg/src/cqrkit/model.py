"""End-to-end conformalized quantile model and its ``cqr-v1`` file format."""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .conformal import CalibratedQuantiles, CalibrationTable, build_table, conformalize
from .data import Dataset, DataError, ScalerParams, apply_scaler, fit_scaler, split
from .net import NetConfig, Network, QuantileEstimates, QuantileGrid, mc_predict, train
from .scoring import mad, point_estimate

FORMAT = "cqr-v1"


def derive_seed(seed, stream):
    """Independent 32-bit seed for a named random stream of a run."""
    key = zlib.crc32(stream.encode())
    return int(np.random.SeedSequence([seed, key]).generate_state(1)[0])


@dataclass(eq=False)
class CQRModel:
    """Scaler, trained network and (once calibrated) calibration table."""

    network: Network
    scaler: ScalerParams
    feature_names: list[str]
    target_name: str = "y"
    table: CalibrationTable | None = None
    seed: int = 0

    @classmethod
    def fit(cls, dataset: Dataset, config: NetConfig | None = None, cal_size=1000,
            seed=0, grid: QuantileGrid | None = None) -> "CQRModel":
        """Split off a calibration set, train on the rest, then calibrate."""
        if dataset.targets is None or np.any(np.isnan(dataset.targets)):
            raise DataError("training data need a target for every row")
        config = replace(config or NetConfig(), seed=derive_seed(seed, "network"))
        plan = split(len(dataset), cal_size=cal_size, seed=derive_seed(seed, "split"))
        train_set = dataset.subset(plan.train)
        scaler = fit_scaler(train_set)
        scaled = apply_scaler(scaler, train_set)
        net = train(scaled.features, scaled.targets, grid, config)
        model = cls(net, scaler, list(dataset.feature_names), dataset.target_name, seed=seed)
        model.calibrate(dataset.subset(plan.calibration))
        return model

    def _matrix(self, dataset: Dataset):
        missing = [c for c in self.feature_names if c not in dataset.feature_names]
        if missing:
            raise DataError(f"dataset lacks feature columns {missing}", column=missing[0])
        cols = [dataset.feature_names.index(c) for c in self.feature_names]
        aligned = Dataset(dataset.features[:, cols], dataset.targets, dataset.groups,
                          list(self.feature_names), dataset.target_name, dataset.group_name)
        return apply_scaler(self.scaler, aligned).features

    def predict_quantiles(self, dataset: Dataset, mc_seed=None, mc_samples=None) -> QuantileEstimates:
        if mc_seed is None:
            mc_seed = derive_seed(self.seed, "mc-predict")
        return mc_predict(self.network, self._matrix(dataset), mc_samples, mc_seed)

    def calibrate(self, cal_set: Dataset) -> CalibrationTable:
        est = self.predict_quantiles(cal_set, mc_seed=derive_seed(self.seed, "mc-calibration"))
        self.table = build_table(est, cal_set.targets, self.network.grid)
        return self.table

    def predict(self, dataset: Dataset, mc_seed=None, mc_samples=None) -> CalibratedQuantiles:
        if self.table is None:
            raise RuntimeError("model is not calibrated")
        return conformalize(self.predict_quantiles(dataset, mc_seed, mc_samples), self.table)

    def to_dict(self):
        return {
            "format": FORMAT,
            "toolkit_version": __version__,
            "seed": self.seed,
            "feature_names": list(self.feature_names),
            "target_name": self.target_name,
            "scaler": self.scaler.to_dict(),
            "network": self.network.to_dict(),
            "calibration": None if self.table is None else self.table.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT:
            raise ValueError(f"not a {FORMAT} model document")
        net = Network.from_dict(d["network"])
        table = d.get("calibration")
        return cls(
            net,
            ScalerParams.from_dict(d["scaler"]),
            list(d["feature_names"]),
            d["target_name"],
            None if table is None else CalibrationTable.from_dict(table, net.grid),
            d["seed"],
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def cross_validate(dataset: Dataset, folds, config: NetConfig | None = None, cal_size=1000,
                   seed=0):
    """Fit on each fold's complement and score the held-out fold.

    Returns one dict per fold with the held-out indices, MAD of the point
    estimates, the raw and calibrated quantiles and the fold's table.
    """
    results = []
    all_idx = np.arange(len(dataset))
    for i, held in enumerate(folds):
        rest = np.setdiff1d(all_idx, held)
        if cal_size >= rest.size:
            raise DataError(f"fold {i} leaves {rest.size} rows, too few for a "
                            f"calibration set of {cal_size}")
        model = CQRModel.fit(dataset.subset(rest), config, cal_size, derive_seed(seed, f"fold-{i}"))
        test = dataset.subset(held)
        est = model.predict_quantiles(test)
        cq = conformalize(est, model.table)
        results.append({"index": held, "mad": mad(point_estimate(cq), test.targets),
                        "estimates": est, "calibrated": cq, "table": model.table})
    return results


def format_mean_sd(values, digits=2):
    """``"mean (SD)"`` with the sample standard deviation, e.g. ``"2.92 (0.11)"``."""
    values = np.asarray(values, dtype=float)
    sd = values.std(ddof=1) if values.size > 1 else 0.0
    return f"{values.mean():.{digits}f} ({sd:.{digits}f})"
