"""Hourly market data: ingestion, gap repair, scaling, time-step shifting and
monthly look-back splits."""

from __future__ import annotations

import calendar
import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    BadTimestamp,
    BadValue,
    ColumnAllMissing,
    ColumnTooSparse,
    DataError,
    DegenerateColumn,
    DuplicateTimestamp,
    EmptyColumn,
    FileUnreadable,
    FrameTooShort,
    InsufficientHistory,
    InvalidBounds,
    InvalidWindow,
    MonthNotCovered,
    UnknownColumn,
)

PRICE = "price_eur_mwh"
EXOGENOUS = ("load_fc_mw", "res_fc_mw", "gen_fc_mw", "netflow_fc_mw")
CSV_COLUMNS = ("timestamp", PRICE) + EXOGENOUS
DEFAULT_SCHEMA = {name: name for name in CSV_COLUMNS}

ALLOWED_WINDOWS = (7, 14, 30, 45, 60, 90)
LAG_DEPTH = 24
HOUR = np.timedelta64(1, "h")
DAY = np.timedelta64(24, "h")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeSeriesFrame:
    """Contiguous hourly multivariate series; NaN marks a missing cell."""

    start: np.datetime64
    columns: tuple[str, ...]
    data: np.ndarray  # (hours, columns)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != len(self.columns):
            raise DataError("frame data must be (hours, columns)")
        object.__setattr__(self, "start", np.datetime64(self.start, "h"))
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "data", _readonly(data))

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.start + np.arange(len(self)) * HOUR

    @property
    def mask(self) -> np.ndarray:
        return np.isnan(self.data)

    @property
    def n_missing(self) -> int:
        return int(self.mask.sum())

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise UnknownColumn(name) from None


def parse_timestamp(text: str, row: int) -> np.datetime64:
    s = text.strip()
    if s.endswith("Z") or s.endswith("z"):
        s = s[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(s)
    except ValueError:
        raise BadTimestamp(row, text) from None
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    if ts.minute or ts.second or ts.microsecond:
        raise BadTimestamp(row, text)
    return np.datetime64(ts, "h")


def format_timestamp(ts: np.datetime64) -> str:
    return str(np.datetime64(ts, "s")) + "Z"


def ingest_csv(path, schema: Mapping[str, str] | None = None) -> TimeSeriesFrame:
    """Read a transparency-platform style export onto an hourly grid.

    ``schema`` maps canonical column names (``timestamp``, ``price_eur_mwh``,
    ...) to header names in the file. Hours absent from the file come back as
    fully missing rows; duplicate hours are rejected.
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    ts_col = schema.pop("timestamp", "timestamp")
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"{path}: {exc.strerror or exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise FileUnreadable(f"{path}: missing header")
        for name in (ts_col, *schema.values()):
            if name not in header:
                raise UnknownColumn(name)
        stamps: list[np.datetime64] = []
        rows: list[list[float]] = []
        seen: set = set()
        for line_no, rec in enumerate(reader, start=2):
            ts = parse_timestamp(rec[ts_col] or "", line_no)
            if ts in seen:
                raise DuplicateTimestamp(format_timestamp(ts))
            seen.add(ts)
            vals = []
            for canon, src in schema.items():
                raw = (rec[src] or "").strip()
                if raw == "":
                    vals.append(np.nan)
                    continue
                try:
                    vals.append(float(raw))
                except ValueError:
                    raise BadValue(f"line {line_no}: {src}={raw!r}") from None
            stamps.append(ts)
            rows.append(vals)
    if not stamps:
        raise FileUnreadable(f"{path}: no data rows")
    times = np.array(stamps, dtype="datetime64[h]")
    start = times.min()
    idx = ((times - start) // HOUR).astype(np.int64)
    data = np.full((int(idx.max()) + 1, len(schema)), np.nan)
    data[idx] = np.array(rows, dtype=np.float64)
    return TimeSeriesFrame(start, tuple(schema), data)


def write_csv(frame: TimeSeriesFrame, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("timestamp",) + frame.columns)
        for ts, row in zip(frame.times, frame.data):
            w.writerow([format_timestamp(ts)] + ["" if np.isnan(v) else repr(float(v)) for v in row])


def interpolate_missing(frame: TimeSeriesFrame) -> TimeSeriesFrame:
    """Fill gaps linearly; leading/trailing runs take the nearest observation."""
    out = np.array(frame.data)
    pos = np.arange(len(frame), dtype=np.float64)
    for j, name in enumerate(frame.columns):
        col = out[:, j]
        ok = ~np.isnan(col)
        n_obs = int(ok.sum())
        if n_obs == 0:
            raise ColumnAllMissing(name)
        if n_obs < 2:
            raise ColumnTooSparse(name)
        if n_obs < len(col):
            # np.interp clamps outside the observed range, which is exactly
            # the nearest-observation edge rule.
            out[:, j] = np.interp(pos, pos[ok], col[ok])
    return TimeSeriesFrame(frame.start, frame.columns, out)


# ---- scaling -------------------------------------------------------------

@dataclass(frozen=True)
class ScalerParams:
    mins: np.ndarray
    maxs: np.ndarray
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mins", _readonly(np.atleast_1d(self.mins)))
        object.__setattr__(self, "maxs", _readonly(np.atleast_1d(self.maxs)))
        if not self.low < self.high:
            raise InvalidBounds(f"need low < high, got ({self.low}, {self.high})")

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist(),
                "low": self.low, "high": self.high}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(np.array(d["mins"], float), np.array(d["maxs"], float), d["low"], d["high"])


def fit_scaler(train_columns, bounds: tuple[float, float] = (0.0, 1.0)) -> ScalerParams:
    """Per-column min/max of the training columns."""
    low, high = float(bounds[0]), float(bounds[1])
    if not low < high:
        raise InvalidBounds(f"need low < high, got ({low}, {high})")
    X = np.asarray(train_columns, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise EmptyColumn("cannot fit a scaler on zero rows")
    return ScalerParams(X.min(axis=0), X.max(axis=0), low, high)


def apply_scaler(params: ScalerParams, columns) -> np.ndarray:
    X = np.asarray(columns, dtype=np.float64)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[:, None]
    span = params.maxs - params.mins
    norm = np.divide(X - params.mins, span, out=np.zeros_like(X), where=span > 0)
    out = norm * (params.high - params.low) + params.low
    return out[:, 0] if squeeze else out


def invert_scaler(params: ScalerParams, scaled) -> np.ndarray:
    span = params.maxs - params.mins
    if np.any(span <= 0):
        raise DegenerateColumn("scaler was fit on a constant column")
    S = np.asarray(scaled, dtype=np.float64)
    squeeze = S.ndim == 1
    if squeeze:
        S = S[:, None]
    out = (S - params.low) / (params.high - params.low) * span + params.mins
    return out[:, 0] if squeeze else out


# ---- supervised rows -----------------------------------------------------

@dataclass(frozen=True)
class SupervisedDataset:
    X: np.ndarray
    y: np.ndarray
    row_times: np.ndarray
    feature_names: tuple[str, ...]
    categorical_slots: tuple[int, ...] = ()

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != len(self.y) or len(self.y) != len(self.row_times):
            raise DataError("X, y and row_times disagree on row count")
        if len(self.feature_names) != self.X.shape[1]:
            raise DataError("feature_names length must equal X column count")

    def __len__(self) -> int:
        return len(self.y)

    def take(self, start: int, stop: int) -> "SupervisedDataset":
        return SupervisedDataset(self.X[start:stop], self.y[start:stop],
                                 self.row_times[start:stop], self.feature_names,
                                 self.categorical_slots)

    @property
    def numeric_slots(self) -> tuple[int, ...]:
        return tuple(j for j in range(self.X.shape[1]) if j not in self.categorical_slots)

    @property
    def lag_slots(self) -> tuple[int, ...]:
        return tuple(j for j, n in enumerate(self.feature_names) if n.startswith("price_lag_"))


def hour_of_day(times: np.ndarray) -> np.ndarray:
    hours = times.astype("datetime64[h]").astype(np.int64)
    return hours % 24


def day_of_week(times: np.ndarray) -> np.ndarray:
    """Monday = 0."""
    days = times.astype("datetime64[D]").astype(np.int64)
    return (days + 3) % 7


def shift_timesteps(frame: TimeSeriesFrame, n: int = LAG_DEPTH, *, price: str = PRICE,
                    calendar_slots: bool = True) -> SupervisedDataset:
    """One row per target hour t >= n: prices at t-n..t-1, exogenous columns
    at t, then hour-of-day and day-of-week of t."""
    T = len(frame)
    if n < 1 or T <= n:
        raise FrameTooShort(f"frame has {T} hours, lag depth {n} needs more than {n}")
    if frame.n_missing:
        raise DataError("frame still has missing cells; interpolate first")
    p = frame.column(price)
    lags = np.lib.stride_tricks.sliding_window_view(p, n)[: T - n]
    exog_names = [c for c in frame.columns if c != price]
    exog = frame.data[n:, [frame.columns.index(c) for c in exog_names]]
    times = frame.times[n:]
    parts = [lags, exog]
    names = [f"price_lag_{n - k}" for k in range(n)] + exog_names
    cats: tuple[int, ...] = ()
    if calendar_slots:
        parts.append(np.column_stack([hour_of_day(times), day_of_week(times)]).astype(np.float64))
        names += ["hour_of_day", "day_of_week"]
        cats = (len(names) - 2, len(names) - 1)
    X = np.ascontiguousarray(np.hstack(parts))
    return SupervisedDataset(X, p[n:].copy(), times, tuple(names), cats)


# ---- monthly look-back splits --------------------------------------------

@dataclass(frozen=True)
class WindowSplit:
    window_days: int
    month: tuple[int, int]
    train: SupervisedDataset
    test: SupervisedDataset


def test_days_in_month(year: int, month: int) -> int:
    """ceil(0.2 * days_in_month), in integer arithmetic."""
    dim = calendar.monthrange(year, month)[1]
    return -(-dim // 5)


def split_bounds(window_days: int, month: tuple[int, int]):
    """(train_start, test_start, test_end) hour stamps; test_end exclusive."""
    year, mon = month
    dim = calendar.monthrange(year, mon)[1]
    first = np.datetime64(f"{year:04d}-{mon:02d}-01T00", "h")
    test_start = first + (dim - test_days_in_month(year, mon)) * DAY
    test_end = first + dim * DAY
    return test_start - window_days * DAY, test_start, test_end


def split_monthly(ds: SupervisedDataset, window_days: int, month: tuple[int, int]) -> WindowSplit:
    """Chronological split: the last ceil(20%) days of the month are test,
    the ``window_days`` full days right before them are train."""
    if window_days not in ALLOWED_WINDOWS:
        raise InvalidWindow(f"window {window_days} not in {ALLOWED_WINDOWS}")
    train_start, test_start, test_end = split_bounds(window_days, month)
    first, last = ds.row_times[0], ds.row_times[-1]
    if test_start < first or test_end - HOUR > last:
        raise MonthNotCovered(f"{month[0]:04d}-{month[1]:02d} test period not covered by data")
    if train_start < first:
        available = int(((test_start - first) // HOUR) // 24)
        raise InsufficientHistory(window_days, available)
    # row_times are contiguous hours, so offsets are arithmetic
    a = int((train_start - first) // HOUR)
    b = int((test_start - first) // HOUR)
    c = int((test_end - first) // HOUR)
    return WindowSplit(window_days, tuple(month), ds.take(a, b), ds.take(b, c))


@dataclass(frozen=True)
class DatasetScaler:
    """Feature and target scalers fit on a training split.

    Categorical slots pass through unscaled.
    """

    x_params: ScalerParams
    y_params: ScalerParams
    numeric_slots: tuple[int, ...]

    @classmethod
    def fit(cls, train: SupervisedDataset, bounds=(0.0, 1.0)) -> "DatasetScaler":
        slots = train.numeric_slots
        return cls(fit_scaler(train.X[:, slots], bounds), fit_scaler(train.y, bounds), slots)

    def transform(self, ds: SupervisedDataset) -> SupervisedDataset:
        X = ds.X.copy()
        X[:, self.numeric_slots] = apply_scaler(self.x_params, ds.X[:, self.numeric_slots])
        y = apply_scaler(self.y_params, ds.y)
        return SupervisedDataset(X, y, ds.row_times, ds.feature_names, ds.categorical_slots)

    def inverse_y(self, scaled) -> np.ndarray:
        return invert_scaler(self.y_params, scaled)

    def to_dict(self) -> dict:
        return {"x": self.x_params.to_dict(), "y": self.y_params.to_dict(),
                "numeric_slots": list(self.numeric_slots)}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetScaler":
        return cls(ScalerParams.from_dict(d["x"]), ScalerParams.from_dict(d["y"]),
                   tuple(d["numeric_slots"]))


# ---- synthetic data ------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    base: float = 110.0
    daily_amp: float = 25.0
    weekly_amp: float = 8.0
    annual_amp: float = 30.0
    noise: float = 12.0
    noise_ar: float = 0.97
    spike_rate: float = 0.004
    spike_scale: float = 80.0
    exog_coupling: float = 1.0
    start: str = "2023-01-01"

    @classmethod
    def from_file(cls, path) -> "SyntheticSpec":
        kwargs = {}
        names = {f.name: f.type for f in cls.__dataclass_fields__.values()}
        for k, v in read_kv_file(path):
            if k not in names:
                raise DataError(f"{path}: unknown synthetic parameter {k!r}")
            try:
                kwargs[k] = v if k == "start" else float(v)
            except ValueError:
                raise DataError(f"{path}: {k} needs a number, got {v!r}") from None
        return cls(**kwargs)


def read_kv_file(path) -> list[tuple[str, str]]:
    """Flat ``key = value`` lines; ``#`` comments; keys may repeat."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"{path}: {exc.strerror or exc}") from None
    pairs = []
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{no}: expected key = value")
        k, v = line.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return pairs


def seasonal_price(hours: np.ndarray, spec: SyntheticSpec) -> np.ndarray:
    """Noise-free price at absolute hours since the Unix epoch."""
    h = hours.astype(np.float64)
    daily = spec.daily_amp * np.cos(2 * np.pi * ((hours % 24) - 19) / 24)
    # epoch hour 0 is a Thursday; weekly trough on Sunday
    weekly = spec.weekly_amp * np.cos(2 * np.pi * ((hours - 72) % 168 - 84) / 168)
    annual = spec.annual_amp * np.cos(2 * np.pi * (h - 8760 * 53 - 24 * 15) / 8760)
    return spec.base + daily + weekly + annual


def gen_synthetic(days: int, spec: SyntheticSpec | None = None, seed: int = 0) -> TimeSeriesFrame:
    """Deterministic synthetic market: seasonal price plus an AR(1) latent
    driver that also moves load and RES forecasts, plus rare positive spikes."""
    if days < 1:
        raise DataError("days must be >= 1")
    spec = spec or SyntheticSpec()
    rng = np.random.default_rng(seed)
    T = days * 24
    start = np.datetime64(spec.start, "h")
    hours = start.astype(np.int64) + np.arange(T, dtype=np.int64)

    eps = rng.standard_normal(T)
    z = np.empty(T)
    z[0] = eps[0]
    phi = spec.noise_ar
    scale = math.sqrt(1.0 - phi * phi)
    for t in range(1, T):
        z[t] = phi * z[t - 1] + scale * eps[t]
    spikes = (rng.random(T) < spec.spike_rate) * rng.exponential(spec.spike_scale, T)
    own = rng.standard_normal((T, 4))

    clean = seasonal_price(hours, spec)
    shape = clean - spec.base
    price = clean + spec.noise * z + spikes

    hod = (hours % 24).astype(np.float64)
    k = spec.exog_coupling
    load = 6000.0 + 40.0 * shape + k * 350.0 * z + 50.0 * own[:, 0]
    solar = np.maximum(0.0, np.sin(2 * np.pi * (hod - 6) / 24))
    res = np.maximum(0.0, 2500.0 + 1800.0 * solar - k * 250.0 * z + 80.0 * own[:, 1])
    netflow = 300.0 + 150.0 * np.cos(2 * np.pi * (hod - 3) / 24) + 40.0 * own[:, 2]
    gen = load - netflow + 20.0 * own[:, 3]
    data = np.column_stack([price, load, res, gen, netflow])
    return TimeSeriesFrame(start, (PRICE,) + EXOGENOUS, data)


__all__ = [
    "ALLOWED_WINDOWS", "CSV_COLUMNS", "DatasetScaler", "EXOGENOUS", "LAG_DEPTH", "PRICE",
    "ScalerParams", "SupervisedDataset", "SyntheticSpec", "TimeSeriesFrame", "WindowSplit",
    "apply_scaler", "fit_scaler", "gen_synthetic", "ingest_csv", "interpolate_missing",
    "invert_scaler", "read_kv_file", "seasonal_price", "shift_timesteps", "split_bounds",
    "split_monthly", "write_csv",
]
