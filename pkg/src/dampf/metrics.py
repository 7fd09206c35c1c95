"""Point-forecast error metrics and the persistence baseline."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import DAY, PRICE, TimeSeriesFrame
from .errors import (
    ConstantActualsForR2,
    EmptyInput,
    InsufficientHistory,
    LengthMismatch,
    ZeroPersistenceRmse,
)

METRIC_NAMES = ("mae", "mape", "rmse", "r2", "fsi", "n_hours", "n_mape_excluded")


@dataclass(frozen=True)
class MetricsReport:
    """``mape`` is a percentage over hours with nonzero actuals; ``fsi`` is
    None unless a persistence RMSE for the same hours was supplied."""

    mae: float
    mape: float
    rmse: float
    r2: float
    fsi: float | None
    n_hours: int
    n_mape_excluded: int

    def as_dict(self) -> dict:
        return asdict(self)


def _pair(pred, actual):
    pred = np.asarray(pred, np.float64).ravel()
    actual = np.asarray(actual, np.float64).ravel()
    if len(pred) != len(actual):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(actual)} actuals")
    if len(pred) == 0:
        raise EmptyInput("metrics need at least one hour")
    return pred, actual


def mae(pred, actual) -> float:
    pred, actual = _pair(pred, actual)
    return float(np.mean(np.abs(pred - actual)))


def rmse(pred, actual) -> float:
    pred, actual = _pair(pred, actual)
    return math.sqrt(float(np.mean((pred - actual) ** 2)))


def mape(pred, actual) -> tuple[float, int]:
    """(percentage error over nonzero actuals, number of zero actuals skipped)."""
    pred, actual = _pair(pred, actual)
    keep = actual != 0
    excluded = int(len(actual) - keep.sum())
    if not keep.any():
        return math.nan, excluded
    return float(np.mean(np.abs((pred[keep] - actual[keep]) / actual[keep])) * 100.0), excluded


def r2(pred, actual) -> float:
    pred, actual = _pair(pred, actual)
    abar = np.mean(actual)
    ss_tot = float(np.sum((abar - actual) ** 2))
    if ss_tot == 0.0:
        raise ConstantActualsForR2("R^2 is undefined for constant actuals")
    return 1.0 - float(np.sum((actual - pred) ** 2)) / ss_tot


def fsi(model_rmse: float, persistence_rmse: float) -> float:
    if not persistence_rmse > 0:
        raise ZeroPersistenceRmse("persistence RMSE must be positive")
    return 1.0 - model_rmse / persistence_rmse


def compute_metrics(pred, actual, persistence_rmse: float | None = None) -> MetricsReport:
    pred, actual = _pair(pred, actual)
    if persistence_rmse is not None and not persistence_rmse > 0:
        raise ZeroPersistenceRmse("persistence RMSE must be positive")
    e = rmse(pred, actual)
    pct, excluded = mape(pred, actual)
    return MetricsReport(
        mae=mae(pred, actual),
        mape=pct,
        rmse=e,
        r2=r2(pred, actual),
        fsi=None if persistence_rmse is None else fsi(e, persistence_rmse),
        n_hours=len(actual),
        n_mape_excluded=excluded,
    )


def naive_persistence(frame: TimeSeriesFrame, test_times, price: str = PRICE) -> np.ndarray:
    """Same hour on the previous day."""
    times = np.asarray(test_times).astype("datetime64[h]")
    src = times - DAY
    idx = ((src - frame.start) // np.timedelta64(1, "h")).astype(np.int64)
    if len(idx) and (idx.min() < 0 or idx.max() >= len(frame)):
        have = int((times.min() - frame.start) // DAY) if len(times) else 0
        raise InsufficientHistory(1, max(have, 0))
    values = frame.column(price)[idx]
    if np.isnan(values).any():
        raise InsufficientHistory(1, 0)
    return values
