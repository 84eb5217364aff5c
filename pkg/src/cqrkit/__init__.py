"""Conformalized composite quantile regression with Monte-Carlo dropout."""

__version__ = "0.1.0"

from .conformal import (  # noqa: E402
    CalibratedQuantiles,
    CalibrationTable,
    build_table,
    calibration_constant,
    conformalize,
    conformity_score,
    coverage_bound,
)
from .data import Dataset, SyntheticTask, load_csv, synth_heteroscedastic  # noqa: E402
from .model import CQRModel  # noqa: E402
from .net import NetConfig, QuantileEstimates, QuantileGrid, mc_predict, train  # noqa: E402
from .scoring import deviation_score, gap, mad, picp, picp_curve, point_estimate  # noqa: E402
from .stats import mann_whitney, midranks  # noqa: E402
