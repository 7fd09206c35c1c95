"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 model or runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import (
    MODEL_NAMES,
    ExperimentConfig,
    _coerce,
    _config_class,
    _parse_month,
    emit_report,
    report_from_traces,
    run_experiment,
    write_results_table,
)
from .boosting import PRESETS, boost_fit, ensemble_predict
from .dataset import (
    DatasetScaler,
    SyntheticSpec,
    format_timestamp,
    gen_synthetic,
    ingest_csv,
    interpolate_missing,
    shift_timesteps,
    split_monthly,
    write_csv,
)
from .errors import ConfigError, DataError, ModelError, OutputUnwritable
from .lstm import TrainConfig, train_lstm_ffec
from .metrics import compute_metrics, naive_persistence, rmse
from .serialize import NaiveModel, load_model, save_model

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 1, 2, 3

log = logging.getLogger("dampf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _globals(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None),
                   help="random seed (overrides any seed in a config file)")
    p.add_argument("--jobs", type=int, default=d(1), help="worker processes for benchmark cells")
    p.add_argument("--quiet", action="store_true", default=d(False), help="only print errors")
    return p


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _month(text: str):
    try:
        return _parse_month(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dampf", description=__doc__.splitlines()[0],
                     parents=[_globals(False)])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    g = [_globals(True)]

    p = sub.add_parser("synth", parents=g, help="write a synthetic market CSV")
    p.add_argument("--days", type=_positive, required=True, help="number of days to generate")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--spec", help="key = value file overriding generator parameters")

    p = sub.add_parser("ingest-check", parents=g, help="validate a market CSV and summarise it")
    p.add_argument("--data", required=True, help="market CSV path")

    p = sub.add_parser("train", parents=g, help="fit one model on one monthly split")
    p.add_argument("--data", required=True, help="market CSV path")
    p.add_argument("--model", required=True, help=f"one of: {', '.join(MODEL_NAMES)}")
    p.add_argument("--window", type=int, required=True, help="look-back window in days")
    p.add_argument("--month", type=_month, required=True, help="test month, YYYY-MM")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                   help="override one model hyperparameter (repeatable)")

    p = sub.add_parser("evaluate", parents=g, help="score a saved model on its test month")
    p.add_argument("--model-file", required=True, help="file written by train")
    p.add_argument("--data", required=True, help="market CSV path")
    p.add_argument("--traces", help="optional CSV of per-hour predictions")

    p = sub.add_parser("benchmark", parents=g, help="run a benchmark grid from a config file")
    p.add_argument("--config", required=True, help="key = value experiment config")
    p.add_argument("--out", help="report directory (default: the config's output)")

    p = sub.add_parser("report", parents=g, help="recompute tables from a report's traces")
    p.add_argument("--run", required=True, help="report directory containing traces.csv")
    p.add_argument("--out", help="write recomputed files here instead of printing")
    return parser


def _say(args, *parts) -> None:
    if not args.quiet:
        print(*parts)


def _load_frame(path):
    return interpolate_missing(ingest_csv(path))


def cmd_synth(args) -> int:
    spec = SyntheticSpec.from_file(args.spec) if args.spec else SyntheticSpec()
    frame = gen_synthetic(args.days, spec, seed=0 if args.seed is None else args.seed)
    try:
        write_csv(frame, args.out)
    except OSError as exc:
        raise OutputUnwritable(f"{args.out}: {exc.strerror or exc}") from None
    _say(args, f"wrote {len(frame)} hours to {args.out}")
    return EXIT_OK


def cmd_ingest_check(args) -> int:
    raw = ingest_csv(args.data)
    frame = interpolate_missing(raw)
    ds = shift_timesteps(frame)
    _say(args, f"hours: {len(raw)}")
    _say(args, f"first: {format_timestamp(raw.start)}")
    _say(args, f"last: {format_timestamp(raw.times[-1])}")
    _say(args, f"missing cells: {raw.n_missing}")
    for name, n in zip(raw.columns, raw.mask.sum(axis=0)):
        _say(args, f"  {name}: {int(n)} missing")
    _say(args, f"supervised rows: {len(ds)} x {ds.X.shape[1]} features")
    return EXIT_OK


def _params(model: str, pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep:
            raise UsageError(f"--param expects NAME=VALUE, got {pair!r}")
        try:
            out[name.strip()] = _coerce(_config_class(model), name.strip(), value.strip())
        except ConfigError as exc:
            raise UsageError(str(exc)) from None
    return out


def cmd_train(args) -> int:
    if args.model not in MODEL_NAMES:
        raise UsageError(f"unknown model {args.model!r}; valid models: {', '.join(MODEL_NAMES)}")
    params = _params(args.model, args.param)
    seed = 42 if args.seed is None else args.seed
    try:
        if args.model == "lstm_ffec":
            cfg = TrainConfig(seed=seed).with_overrides(**params)
        elif args.model != "naive":
            cfg = PRESETS[args.model].with_overrides(seed=seed, **params)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    frame = _load_frame(args.data)
    split = split_monthly(shift_timesteps(frame), args.window, args.month)
    meta = {"model": args.model, "window_days": args.window,
            "month": f"{args.month[0]:04d}-{args.month[1]:02d}", "seed": seed,
            "feature_names": list(split.train.feature_names)}
    if args.model == "naive":
        model, scaler = NaiveModel(), None
        fitted = naive_persistence(frame, split.train.row_times)
    else:
        scaler = DatasetScaler.fit(split.train)
        train = scaler.transform(split.train)
        if args.model == "lstm_ffec":
            model = train_lstm_ffec(train, cfg)
            scaled = model.predict(train.X)
        else:
            model = boost_fit(train, args.model, cfg)
            scaled = ensemble_predict(model, train.X)
        fitted = scaler.inverse_y(scaled)
    save_model(args.out, model, scaler, meta)
    _say(args, f"train MAE: {float(np.mean(np.abs(fitted - split.train.y))):.6g}")
    return EXIT_OK


def predict_saved(model, scaler, frame, split) -> np.ndarray:
    if isinstance(model, NaiveModel):
        return naive_persistence(frame, split.test.row_times)
    test = scaler.transform(split.test)
    if hasattr(model, "trees"):
        return scaler.inverse_y(ensemble_predict(model, test.X))
    return scaler.inverse_y(model.predict(test.X))


def cmd_evaluate(args) -> int:
    model, scaler, meta = load_model(args.model_file)
    try:
        window, month = int(meta["window_days"]), _parse_month(meta["month"])
    except (KeyError, ValueError, ConfigError):
        raise ModelError("model file lacks window/month metadata") from None
    frame = _load_frame(args.data)
    split = split_monthly(shift_timesteps(frame), window, month)
    if list(split.test.feature_names) != meta.get("feature_names", list(split.test.feature_names)):
        raise DataError("data columns differ from those the model was trained on")
    pred = predict_saved(model, scaler, frame, split)
    naive = naive_persistence(frame, split.test.row_times)
    p_rmse = rmse(naive, split.test.y)
    rep = compute_metrics(pred, split.test.y, p_rmse if p_rmse > 0 else None)
    for k, v in rep.as_dict().items():
        _say(args, f"{k}: {'' if v is None else format(v, '.6g')}")
    if args.traces:
        try:
            with open(args.traces, "w", encoding="utf-8") as fh:
                fh.write("timestamp,actual,prediction\n")
                for ts, a, p in zip(split.test.row_times, split.test.y, pred):
                    fh.write(f"{format_timestamp(ts)},{a:.6g},{p:.6g}\n")
        except OSError as exc:
            raise OutputUnwritable(f"{args.traces}: {exc.strerror or exc}") from None
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    result = run_experiment(cfg, jobs=args.jobs)
    out = Path(args.out) if args.out else cfg.market_path(cfg.output)
    emit_report(result, out)
    done = len(result.completed)
    _say(args, f"{done}/{len(result.cells)} cells completed; report in {out}")
    return EXIT_OK if done else EXIT_MODEL


def cmd_report(args) -> int:
    run = Path(args.run)
    traces, grid = report_from_traces(run / "traces.csv", args.out)
    if args.out is None and not args.quiet:
        write_results_table(grid, sys.stdout)
    else:
        _say(args, f"recomputed {len(grid)} grid entries into {args.out}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "ingest-check": cmd_ingest_check, "train": cmd_train,
            "evaluate": cmd_evaluate, "benchmark": cmd_benchmark, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"dampf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"dampf {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ModelError, ValueError, FloatingPointError, MemoryError) as exc:
        print(f"dampf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
