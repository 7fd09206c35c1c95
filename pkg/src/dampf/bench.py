"""Benchmark grid: (market x window x model x month) cells, pooled metrics,
seasonal and peak/valley breakdowns, and report files."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import sys
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from . import __version__
from .boosting import LEARNERS, PRESETS, BoostConfig, boost_fit, ensemble_predict
from .dataset import (
    ALLOWED_WINDOWS,
    DatasetScaler,
    TimeSeriesFrame,
    format_timestamp,
    ingest_csv,
    interpolate_missing,
    parse_timestamp,
    read_kv_file,
    shift_timesteps,
    split_monthly,
)
from .errors import (
    ConfigError,
    ConstantActualsForR2,
    DampfError,
    InsufficientHistory,
    MonthNotCovered,
    NoFeasibleCells,
    OutputUnwritable,
)
from .lstm import TrainConfig, train_lstm_ffec
from .metrics import (
    METRIC_NAMES,
    MetricsReport,
    compute_metrics,
    fsi,
    mae,
    mape,
    naive_persistence,
    rmse,
)

log = logging.getLogger(__name__)

MODEL_NAMES = ("naive", "lstm_ffec") + tuple(LEARNERS)
SEASONS = OrderedDict([("winter", (12, 1, 2)), ("spring", (3, 4, 5)),
                       ("summer", (6, 7, 8)), ("fall", (9, 10, 11))])

TRACE_HEADER = ("market", "window_days", "model", "timestamp", "actual", "prediction")
RESULTS_HEADER = ("market", "window_days", "model", "metric", "value")


def sig6(x: float) -> float:
    """Round to 6 significant digits (ties to even, as float formatting does)."""
    return float(f"{x:.6g}")


def _fmt6(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.6g}"


# ---- configuration -------------------------------------------------------

def _parse_month(text: str) -> tuple[int, int]:
    try:
        y, m = text.strip().split("-")
        month = (int(y), int(m))
    except ValueError:
        raise ConfigError(f"bad month {text!r}, expected YYYY-MM") from None
    if not 1 <= month[1] <= 12:
        raise ConfigError(f"bad month {text!r}")
    return month


def _month_range(text: str) -> list[tuple[int, int]]:
    if ".." not in text:
        return [_parse_month(text)]
    a, b = (_parse_month(t) for t in text.split("..", 1))
    out = []
    y, m = a
    while (y, m) <= b:
        out.append((y, m))
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    if not out:
        raise ConfigError(f"empty month range {text!r}")
    return out


def _coerce(cfg_cls, name: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(cfg_cls)}
    if name not in fields:
        raise ConfigError(f"unknown parameter {name!r} for {cfg_cls.__name__}")
    default = fields[name].default
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default is None:
            return None if raw.lower() == "none" else float(raw)
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.split(","))
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {name}") from None


def _config_class(model: str):
    return TrainConfig if model == "lstm_ffec" else BoostConfig


@dataclass(frozen=True)
class ExperimentConfig:
    markets: tuple[tuple[str, str], ...]
    windows: tuple[int, ...]
    models: tuple[str, ...]
    months: tuple[tuple[int, int], ...] = ()
    seed: int = 42
    output: str = "report"
    params: dict = field(default_factory=dict)
    base_dir: str = "."

    def __post_init__(self):
        if not self.markets:
            raise ConfigError("config lists no market")
        if not self.windows or not self.models:
            raise ConfigError("config needs at least one window and one model")
        for w in self.windows:
            if w not in ALLOWED_WINDOWS:
                raise ConfigError(f"window {w} not in {ALLOWED_WINDOWS}")
        for m in self.models:
            if m not in MODEL_NAMES:
                raise ConfigError(f"unknown model {m!r}; valid: {', '.join(MODEL_NAMES)}")
        names = [n for n, _ in self.markets]
        if len(set(names)) != len(names):
            raise ConfigError("market names must be unique")
        for name in ("windows", "models", "months"):
            seq = getattr(self, name)
            if len(set(seq)) != len(seq):
                raise ConfigError(f"duplicate entry in {name}")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        markets, windows, models, months = [], [], [], []
        params: dict = {}
        seed, output = 42, "report"
        for key, value in read_kv_file(path):
            if key == "market":
                name, sep, src = value.partition(":")
                if not sep:
                    name, src = Path(value).stem, value
                markets.append((name.strip(), src.strip()))
            elif key == "window":
                try:
                    windows.append(int(value))
                except ValueError:
                    raise ConfigError(f"bad window {value!r}") from None
            elif key == "model":
                models.append(value)
            elif key in ("month", "months"):
                months.extend(_month_range(value))
            elif key == "seed":
                try:
                    seed = int(value)
                except ValueError:
                    raise ConfigError(f"bad seed {value!r}") from None
            elif key == "output":
                output = value
            elif key.startswith("param."):
                parts = key.split(".")
                if len(parts) != 3 or parts[1] not in MODEL_NAMES:
                    raise ConfigError(f"bad parameter key {key!r}, expected param.<model>.<name>")
                _, model, name = parts
                params.setdefault(model, {})[name] = _coerce(_config_class(model), name, value)
            else:
                raise ConfigError(f"{path}: unknown key {key!r}")
        return cls(tuple(markets), tuple(windows), tuple(models), tuple(months), seed, output,
                   params, str(path.parent))

    def market_path(self, src: str) -> Path:
        p = Path(src)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def echo(self) -> dict:
        """Config as written (no output location, no resolved paths)."""
        return {
            "markets": [{"name": n, "path": p} for n, p in self.markets],
            "windows": list(self.windows),
            "models": list(self.models),
            "months": [f"{y:04d}-{m:02d}" for y, m in self.months],
            "seed": self.seed,
            "params": {m: dict(sorted(p.items())) for m, p in sorted(self.params.items())},
        }


def cell_seed(run_seed: int, market: str, window: int, model: str, month: tuple[int, int]) -> int:
    key = f"{run_seed}|{market}|{window}|{model}|{month[0]:04d}-{month[1]:02d}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "big") & 0x7FFFFFFF


# ---- traces --------------------------------------------------------------

@dataclass
class Trace:
    """Per-hour predictions of one (market, window, model), any months."""

    market: str
    window_days: int
    model: str
    times: np.ndarray       # datetime64[h]
    actual: np.ndarray
    prediction: np.ndarray

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.market, self.window_days, self.model)


def concat_traces(parts: list[Trace]) -> list[Trace]:
    """Merge pieces sharing a key, keeping first-seen key order, time-sorted."""
    groups: OrderedDict = OrderedDict()
    for t in parts:
        groups.setdefault(t.key, []).append(t)
    out = []
    for (market, window, model), ts in groups.items():
        times = np.concatenate([t.times for t in ts])
        order = np.argsort(times, kind="stable")
        out.append(Trace(market, window, model, times[order],
                         np.concatenate([t.actual for t in ts])[order],
                         np.concatenate([t.prediction for t in ts])[order]))
    return out


def write_traces(traces: list[Trace], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for t in traces:
            for ts, a, p in zip(t.times, t.actual, t.prediction):
                w.writerow((t.market, t.window_days, t.model, format_timestamp(ts),
                            _fmt6(float(a)), _fmt6(float(p))))


def read_traces(path) -> list[Trace]:
    parts: list[Trace] = []
    rows: OrderedDict = OrderedDict()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_HEADER:
            raise ConfigError(f"{path}: not a traces file")
        for no, r in enumerate(reader, start=2):
            key = (r["market"], int(r["window_days"]), r["model"])
            rows.setdefault(key, []).append(
                (parse_timestamp(r["timestamp"], no), float(r["actual"]), float(r["prediction"])))
    for (market, window, model), recs in rows.items():
        times, a, p = zip(*recs)
        parts.append(Trace(market, window, model, np.array(times, "datetime64[h]"),
                           np.array(a), np.array(p)))
    return concat_traces(parts)


# ---- grid cells ----------------------------------------------------------

@dataclass
class CellResult:
    market: str
    window_days: int
    model: str
    month: tuple[int, int]
    status: str  # ok | skipped | failed
    reason: str = ""
    trace: Trace | None = None

    def record(self) -> dict:
        return {"market": self.market, "window_days": self.window_days, "model": self.model,
                "month": f"{self.month[0]:04d}-{self.month[1]:02d}", "reason": self.reason}


_FRAMES: dict = {}


def _load_market(path: str):
    if path not in _FRAMES:
        frame = interpolate_missing(ingest_csv(path))
        _FRAMES[path] = (frame, shift_timesteps(frame))
    return _FRAMES[path]


def predict_cell(model: str, frame: TimeSeriesFrame, split, params: dict, seed: int) -> np.ndarray:
    """Train on the split's training rows and predict its test rows (EUR/MWh)."""
    if model == "naive":
        return naive_persistence(frame, split.test.row_times)
    scaler = DatasetScaler.fit(split.train)
    train = scaler.transform(split.train)
    test = scaler.transform(split.test)
    if model == "lstm_ffec":
        cfg = TrainConfig(seed=seed).with_overrides(**params)
        fitted = train_lstm_ffec(train, cfg)
        scaled = fitted.predict(test.X)
    else:
        cfg = PRESETS[model].with_overrides(seed=seed, **params)
        ens = boost_fit(train, model, cfg)
        scaled = ensemble_predict(ens, test.X)
    return scaler.inverse_y(scaled)


def _run_cell(job) -> CellResult:
    market, path, window, model, month, params, seed = job
    res = CellResult(market, window, model, month, "ok")
    try:
        frame, ds = _load_market(path)
        split = split_monthly(ds, window, month)
    except (InsufficientHistory, MonthNotCovered) as exc:
        res.status, res.reason = "skipped", f"{type(exc).__name__}: {exc}"
        return res
    try:
        pred = predict_cell(model, frame, split, params, seed)
        if not np.all(np.isfinite(pred)):
            raise FloatingPointError("non-finite predictions")
    except (DampfError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        res.status, res.reason = "failed", f"{type(exc).__name__}: {exc}"
        return res
    actual = np.array([sig6(v) for v in split.test.y])
    pred = np.array([sig6(v) for v in pred])
    res.trace = Trace(market, window, model, split.test.row_times.copy(), actual, pred)
    return res


# ---- aggregation ---------------------------------------------------------

def _safe_metrics(pred, actual, persistence_rmse) -> MetricsReport:
    try:
        return compute_metrics(pred, actual, persistence_rmse)
    except ConstantActualsForR2:
        e = rmse(pred, actual)
        pct, excluded = mape(pred, actual)
        return MetricsReport(mae(pred, actual), pct, e, math.nan,
                             None if persistence_rmse is None else fsi(e, persistence_rmse),
                             len(actual), excluded)


def grid_from_traces(traces: list[Trace]) -> "OrderedDict[tuple, MetricsReport]":
    """Pooled-hour metrics per (market, window, model); FSI wherever a naive
    trace covers exactly the same hours."""
    naive = {(t.market, t.window_days): t for t in traces if t.model == "naive"}
    grid: OrderedDict = OrderedDict()
    for t in traces:
        p_rmse = None
        ref = naive.get((t.market, t.window_days))
        if ref is not None:
            lookup = dict(zip(ref.times.tolist(), ref.prediction))
            if all(ts in lookup for ts in t.times.tolist()):
                ref_pred = np.array([lookup[ts] for ts in t.times.tolist()])
                r = rmse(ref_pred, t.actual)
                p_rmse = r if r > 0 else None
        grid[t.key] = _safe_metrics(t.prediction, t.actual, p_rmse)
    return grid


def seasonal_breakdown(traces: list[Trace]) -> list[dict]:
    rows = []
    for t in traces:
        months = t.times.astype("datetime64[M]").astype(np.int64) % 12 + 1
        for season, members in SEASONS.items():
            sel = np.isin(months, members)
            if sel.any():
                rows.append({"market": t.market, "window_days": t.window_days, "model": t.model,
                             "season": season,
                             "mae": float(np.mean(np.abs(t.prediction[sel] - t.actual[sel]))),
                             "n_hours": int(sel.sum())})
    return rows


def peak_valley_analysis(traces: list[Trace]) -> list[dict]:
    rows = []
    for t in traces:
        days = t.times.astype("datetime64[D]")
        peak_err, valley_err = [], []
        partial = 0
        for day in np.unique(days):
            sel = np.flatnonzero(days == day)
            if len(sel) != 24:
                partial += 1
                continue
            hours = sel[np.argsort(t.times[sel], kind="stable")]
            a = t.actual[hours]
            pk, vl = hours[int(np.argmax(a))], hours[int(np.argmin(a))]
            peak_err.append(abs(t.prediction[pk] - t.actual[pk]))
            valley_err.append(abs(t.prediction[vl] - t.actual[vl]))
        rows.append({"market": t.market, "window_days": t.window_days, "model": t.model,
                     "peak_mae": float(np.mean(peak_err)) if peak_err else None,
                     "valley_mae": float(np.mean(valley_err)) if valley_err else None,
                     "n_days": len(peak_err), "n_partial_days": partial})
    return rows


# ---- running -------------------------------------------------------------

@dataclass
class RunResult:
    config: ExperimentConfig
    cells: list[CellResult]
    traces: list[Trace]
    grid: "OrderedDict[tuple, MetricsReport]"

    @property
    def completed(self) -> list[CellResult]:
        return [c for c in self.cells if c.status == "ok"]


def _months_covered(frames) -> list[tuple[int, int]]:
    out: set = set()
    for frame in frames:
        first = frame.start.astype("datetime64[M]").astype(np.int64)
        last = (frame.start + (len(frame) - 1) * np.timedelta64(1, "h")).astype("datetime64[M]")
        for m in range(first, last.astype(np.int64) + 1):
            out.add((1970 + m // 12, m % 12 + 1))
    return sorted(out)


def plan_cells(cfg: ExperimentConfig):
    paths = {}
    for name, src in cfg.markets:
        paths[name] = str(cfg.market_path(src))
        _load_market(paths[name])  # surface data errors before fanning out
    months = list(cfg.months) or _months_covered(_FRAMES[p][0] for p in paths.values())
    jobs = []
    for market, _ in cfg.markets:
        for window in cfg.windows:
            for model in cfg.models:
                for month in months:
                    jobs.append((market, paths[market], window, model, month,
                                 dict(cfg.params.get(model, {})),
                                 cell_seed(cfg.seed, market, window, model, month)))
    return jobs


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> RunResult:
    """Run every grid cell; infeasible cells are skipped and model errors are
    recorded per cell. Results do not depend on ``jobs``."""
    plan = plan_cells(cfg)
    log.info("running %d cells with %d worker(s)", len(plan), jobs)
    if jobs > 1 and len(plan) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, plan, chunksize=1))
    else:
        cells = []
        for i, job in enumerate(plan, 1):
            cells.append(_run_cell(job))
            log.debug("cell %d/%d %s -> %s", i, len(plan), job[:5], cells[-1].status)
    if all(c.status == "skipped" for c in cells):
        raise NoFeasibleCells("no (month, window) cell has enough history")
    traces = concat_traces([c.trace for c in cells if c.trace is not None])
    return RunResult(cfg, cells, traces, grid_from_traces(traces))


# ---- report files --------------------------------------------------------

def write_results(grid, path) -> None:
    """Long format, values at full float precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for (market, window, model), rep in grid.items():
            for name in METRIC_NAMES:
                v = getattr(rep, name)
                if v is None:
                    continue
                w.writerow((market, window, model, name, repr(v) if isinstance(v, float) else v))


def read_results(path) -> dict:
    out: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            out[(r["market"], int(r["window_days"]), r["model"], r["metric"])] = float(r["value"])
    return out


def write_results_table(grid, dest) -> None:
    """Wide layout: one row per (window, metric), one column per (market, model).

    ``dest`` is a path or an open text stream.
    """
    if not hasattr(dest, "write"):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            return write_results_table(grid, fh)
    columns = list(OrderedDict.fromkeys((m, model) for m, _, model in grid))
    windows = sorted({w for _, w, _ in grid})
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(["window_days", "metric"] + [f"{m}/{model}" for m, model in columns])
    for window in windows:
        for name in METRIC_NAMES:
            row = [window, name]
            for m, model in columns:
                rep = grid.get((m, window, model))
                v = None if rep is None else getattr(rep, name)
                row.append(v if isinstance(v, int) else _fmt6(v))
            w.writerow(row)


def _round_record(rec: dict) -> dict:
    return {k: (sig6(v) if isinstance(v, float) and math.isfinite(v) else v) for k, v in rec.items()}


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n",
                          encoding="utf-8")


def emit_report(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    if not result.grid:
        raise NoFeasibleCells("no completed cell to report")
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_results(result.grid, out / "results.csv")
        write_results_table(result.grid, out / "results_table.csv")
        write_traces(result.traces, out / "traces.csv")
        seasonal = [_round_record(r) for r in seasonal_breakdown(result.traces)]
        peaks = [_round_record(r) for r in peak_valley_analysis(result.traces)]
        _dump_json({"aggregation": "pooled test hours", "seasonal": seasonal,
                    "peak_valley": peaks}, out / "aggregates.json")
        cells = result.cells
        notes = []
        if not seasonal:
            notes.append("seasonal breakdown is empty")
        manifest = {
            "config": result.config.echo(),
            "seed": result.config.seed,
            "versions": {"dampf": __version__, "numpy": np.__version__,
                         "numba": numba.__version__,
                         "python": ".".join(map(str, sys.version_info[:3]))},
            "aggregation": "metrics pool every test hour across months",
            "persistence": "same hour of the previous day",
            "cells": {"total": len(cells),
                      "completed": sum(c.status == "ok" for c in cells),
                      "skipped": sum(c.status == "skipped" for c in cells),
                      "failed": sum(c.status == "failed" for c in cells)},
            "skipped": [c.record() for c in cells if c.status == "skipped"],
            "failed": [c.record() for c in cells if c.status == "failed"],
            "notes": notes,
        }
        _dump_json(manifest, out / "manifest.json")
    except OSError as exc:
        raise OutputUnwritable(f"{out}: {exc.strerror or exc}") from None
    return out


def report_from_traces(traces_path, out_dir=None):
    """Recompute grid and breakdowns from a traces file."""
    traces = read_traces(traces_path)
    grid = grid_from_traces(traces)
    if out_dir is not None:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_results(grid, out / "results.csv")
            write_results_table(grid, out / "results_table.csv")
            _dump_json({"aggregation": "pooled test hours",
                        "seasonal": [_round_record(r) for r in seasonal_breakdown(traces)],
                        "peak_valley": [_round_record(r) for r in peak_valley_analysis(traces)]},
                       out / "aggregates.json")
        except OSError as exc:
            raise OutputUnwritable(f"{out}: {exc.strerror or exc}") from None
    return traces, grid
