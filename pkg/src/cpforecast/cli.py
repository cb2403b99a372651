"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
All randomness derives from ``--seed`` (default :data:`DEFAULT_SEED`).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import nn
from .changepoint import MosumConfig, detect_change_points, max_batch_size, read_change_points, write_change_points
from .core import SeriesValidationError
from .data import PRESETS, CsvError, CsvSchema, SyntheticSpec, generate_synthetic, load_csv, write_csv
from .evaluation import ScenarioConfig, comparison_csv, comparison_markdown, run_scenario, split_60_20_20
from .forecaster import NumericalError, TrainConfig, predict, train
from .sampler import BatchSizeError, InfeasibleWindowError, RetryExhaustedError, make_rng, split_seed

DEFAULT_SEED = 7

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("cpforecast")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_structured(path: str) -> dict:
    """TOML (by extension) or JSON config file."""
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib

        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path) as fh:
        return json.load(fh)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML/JSON file whose keys mirror the long flags; flags override it")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"master seed (default {DEFAULT_SEED})")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")


def _add_schema(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("CSV schema")
    g.add_argument("--target", default="y", help="target column (default y)")
    g.add_argument("--covariates", default="", help="comma-separated covariate columns")
    g.add_argument("--timestamp", default=None, help="timestamp column (metadata only)")
    g.add_argument("--delimiter", default=",")
    g.add_argument("--no-header", action="store_true", help="columns are 0-based positions")


def _add_mosum(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("MOSUM")
    g.add_argument("--bandwidth", type=float, default=40, help="absolute G (>= 1) or fraction of n in (0, 0.5]")
    g.add_argument("--eta", type=float, default=0.1)
    g.add_argument("--alpha", type=float, default=0.1)
    g.add_argument("--threshold", type=float, default=None, help="absolute threshold override")
    g.add_argument("--threshold-method", choices=["scaled", "asymptotic"], default="scaled")
    g.add_argument("--threshold-scale", type=float, default=0.3)


def _add_train(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    g = p.add_argument_group("training")
    g.add_argument("--batch-size", type=int, default=d.batch_size)
    g.add_argument("--prediction-length", type=int, default=None)
    g.add_argument("--context-length", type=int, default=None)
    g.add_argument("--epochs", type=int, default=d.epochs)
    g.add_argument("--windows-per-epoch", type=int, default=d.windows_per_epoch)
    g.add_argument("--minibatch", type=int, default=d.minibatch)
    g.add_argument("--optimizer", choices=["adam", "sgd"], default=d.optimizer)
    g.add_argument("--learning-rate", type=float, default=d.learning_rate)
    g.add_argument("--hidden", type=int, default=d.hidden)
    g.add_argument("--dense", type=int, default=d.dense)
    g.add_argument("--num-layers", type=int, default=d.num_layers)
    g.add_argument("--scaling", choices=["global", "window"], default=d.scaling)
    g.add_argument("--patience", type=int, default=d.patience, help="early-stopping patience; 0 disables")
    g.add_argument("--loss-on-full-window", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cpforecast", description="Change-point-aware probabilistic forecasting.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic series and its true change points")
    _add_common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS), default=None)
    src.add_argument("--spec", help="TOML/JSON file with SyntheticSpec fields")
    p.add_argument("--out", default="synthetic.csv", help="output CSV path")
    p.add_argument("--truth", default=None, help="change-point file (default: <out>.cp.txt)")

    p = sub.add_parser("detect", help="MOSUM change-point detection")
    _add_common(p)
    p.add_argument("input", help="input CSV")
    _add_schema(p)
    _add_mosum(p)
    p.add_argument("--out", default="changepoints.txt", help="change-point file")
    p.add_argument("--stat-out", default=None, help="two-column (k, T_k) CSV (default: <out>.stat.csv)")

    p = sub.add_parser("train", help="train on the 60%% slice, early-stop on the next 20%%")
    _add_common(p)
    p.add_argument("input")
    _add_schema(p)
    _add_train(p)
    p.add_argument("--mode", choices=["vanilla", "batchcp"], default="vanilla")
    p.add_argument("--changepoints", default=None, help="change-point file (required for batchcp)")
    p.add_argument("--no-split", action="store_true", help="train on the whole series without validation")
    p.add_argument("--checkpoint", default="model.ckpt")
    p.add_argument("--report", default=None, help="train report JSON (default: <checkpoint>.report.json)")

    p = sub.add_parser("predict", help="forecast from a checkpoint")
    _add_common(p)
    p.add_argument("input")
    _add_schema(p)
    p.add_argument("--checkpoint", default="model.ckpt")
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--context-length", type=int, default=40)
    p.add_argument("--origin", type=int, default=None, help="index of the first forecast step (default: end)")
    p.add_argument("--num-samples", type=int, default=100)
    p.add_argument("--out", default="forecast.csv")

    p = sub.add_parser("compare", help="run scenarios I-IV and write a comparison table")
    _add_common(p)
    p.add_argument("input")
    _add_schema(p)
    _add_train(p)
    _add_mosum(p)
    p.add_argument("--changepoints", default=None, help="hand-picked change points (enables scenario III)")
    p.add_argument("--eval-stride", type=int, default=None)
    p.add_argument("--out-dir", default="compare_out")
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        values = _read_structured(args.config)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"unknown config key {key!r}")
        if dest == "covariates" and isinstance(value, list):
            value = ",".join(value)
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _schema(args) -> CsvSchema:
    covs = tuple(c.strip() for c in args.covariates.split(",") if c.strip())
    return CsvSchema(
        target=args.target,
        covariates=covs,
        timestamp=args.timestamp,
        delimiter=args.delimiter,
        header=not args.no_header,
    )


def _mosum(args) -> MosumConfig:
    bw = args.bandwidth
    if float(bw).is_integer() and bw >= 1:
        bw = int(bw)
    return MosumConfig(
        bandwidth=bw,
        eta=args.eta,
        alpha=args.alpha,
        threshold=args.threshold,
        threshold_method=args.threshold_method,
        threshold_scale=args.threshold_scale,
    )


def _train_cfg(args, **extra) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size,
        prediction_length=args.prediction_length,
        context_length=args.context_length,
        epochs=args.epochs,
        windows_per_epoch=args.windows_per_epoch,
        minibatch=args.minibatch,
        seed=args.seed,
        optimizer=args.optimizer,
        learning_rate=args.learning_rate,
        hidden=args.hidden,
        dense=args.dense,
        num_layers=args.num_layers,
        scaling=args.scaling,
        patience=args.patience or None,
        loss_on_full_window=args.loss_on_full_window,
        **extra,
    )


def cmd_synth(args) -> int:
    if args.spec:
        spec = SyntheticSpec.from_dict(_read_structured(args.spec))
        if "seed" not in _read_structured(args.spec):
            spec = replace(spec, seed=args.seed)
    else:
        spec = PRESETS[args.preset or "paper-synthetic"](seed=args.seed)
    ts, cps = generate_synthetic(spec)
    truth = args.truth or f"{os.path.splitext(args.out)[0]}.cp.txt"
    write_csv(args.out, ts)
    write_change_points(truth, cps)
    log.info("wrote %s (%d rows) and %s (%d change points)", args.out, len(ts), truth, len(cps))
    return EXIT_OK


def cmd_detect(args) -> int:
    ts = load_csv(args.input, _schema(args))
    res = detect_change_points(ts, _mosum(args))
    write_change_points(args.out, res.change_points)
    stat_out = args.stat_out or f"{os.path.splitext(args.out)[0]}.stat.csv"
    with open(stat_out, "w") as fh:
        fh.write("k,T_k\n")
        for k, v in zip(res.positions, res.statistic):
            fh.write(f"{k},{float(v)!r}\n")
    log.info("G=%d threshold=%.4f: %d change points", res.bandwidth, res.threshold, len(res.change_points))
    print(" ".join(str(c) for c in res.change_points))
    return EXIT_OK


def _check_batch_size(s: int, cps) -> None:
    s_max = max_batch_size(cps)
    if s_max is not None and s > s_max:
        raise BatchSizeError(s, s_max)


def cmd_train(args) -> int:
    ts = load_csv(args.input, _schema(args))
    cps = read_change_points(args.changepoints) if args.changepoints else None
    if args.mode == "batchcp" and cps is None:
        raise UsageError("--mode batchcp requires --changepoints")
    if args.no_split:
        train_ts, val_ts = ts, None
    else:
        train_ts, val_ts, _ = split_60_20_20(ts)
        if cps is not None:
            cps = type(cps)(tuple(c for c in cps if c < len(train_ts)))
    if cps is not None and args.mode == "batchcp":
        _check_batch_size(args.batch_size, cps)
    cfg = _train_cfg(args, mode=args.mode, change_points=cps)
    params, report = train(train_ts, cfg, validation=val_ts)
    nn.save_checkpoint(args.checkpoint, params)
    report_path = args.report or f"{args.checkpoint}.report.json"
    Path(report_path).write_text(report.to_json())
    log.info("epochs %d, final NLL %.4f", len(report.epoch_nll), report.epoch_nll[-1] if report.epoch_nll else float("nan"))
    return EXIT_OK


def cmd_predict(args) -> int:
    ts = load_csv(args.input, _schema(args))
    params = nn.load_checkpoint(args.checkpoint)
    origin = len(ts) if args.origin is None else args.origin
    if not 1 <= origin <= len(ts):
        raise UsageError(f"--origin must lie in [1, {len(ts)}]")
    lo = max(0, origin - args.context_length)
    ctx = ts.values[lo:origin]
    ctx_cov = fut_cov = None
    if ts.covariates is not None:
        if origin + args.horizon > len(ts):
            raise UsageError("covariate models need known covariates for the whole horizon")
        ctx_cov = ts.covariates[lo:origin]
        fut_cov = ts.covariates[origin : origin + args.horizon]
    rng = make_rng(split_seed(args.seed, ("init", "sampler", "predict"))["predict"])
    fc = predict(params, ctx, args.horizon, args.num_samples, rng, ctx_cov, fut_cov)
    qs = fc.quantiles([0.05, 0.5, 0.95]) if args.num_samples else np.full((3, fc.horizon), np.nan)
    with open(args.out, "w") as fh:
        fh.write("t,mu,sigma,q05,q50,q95\n")
        for h in range(fc.horizon):
            cells = [fc.mu[h], fc.sigma[h], *qs[:, h]]
            fh.write(f"{origin + h}," + ",".join(repr(float(c)) for c in cells) + "\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    ts = load_csv(args.input, _schema(args))
    manual = read_change_points(args.changepoints) if args.changepoints else None
    if manual is not None:
        _check_batch_size(args.batch_size, manual)
    cfg = ScenarioConfig(
        train=_train_cfg(args),
        mosum=_mosum(args),
        manual_change_points=manual,
        eval_stride=args.eval_stride,
    )
    scenarios = ["I", "II"] + (["III"] if manual is not None else []) + ["IV"]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for sc in scenarios:
        rep = run_scenario(sc, ts, cfg)
        (out / f"scenario_{sc}.json").write_text(rep.to_json())
        reports.append(rep)
        log.info("scenario %s: train %.4f test %.4f", sc, rep.train_rmse, rep.test_rmse)
    (out / "table.md").write_text(comparison_markdown(reports))
    (out / "table.csv").write_text(comparison_csv(reports))
    print(comparison_markdown(reports), end="")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "detect": cmd_detect,
    "train": cmd_train,
    "predict": cmd_predict,
    "compare": cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except UsageError as exc:
        print(f"cpforecast: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"cpforecast: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, RetryExhaustedError, FloatingPointError) as exc:
        print(f"cpforecast: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CsvError, SeriesValidationError, BatchSizeError, InfeasibleWindowError, ValueError, OSError) as exc:
        print(f"cpforecast: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
