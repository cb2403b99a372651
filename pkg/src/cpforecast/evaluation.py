"""Metrics, chronological splitting and the four-scenario comparison."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .changepoint import MosumConfig, detect_change_points
from .core import ChangePointSet, TimeSeries
from .forecaster import TrainConfig, naive_forecast, rollout, train
from .sampler import RNG_ALGORITHM

REPORT_VERSION = 1

SCENARIOS = {
    "I": "Baseline naive",
    "II": "No change points",
    "III": "Change points, manual",
    "IV": "Change points, MOSUM",
}


def rmse(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=np.float64).reshape(-1)
    a = np.asarray(actual, dtype=np.float64).reshape(-1)
    if len(p) != len(a):
        raise ValueError(f"length mismatch: {len(p)} predictions, {len(a)} actuals")
    if len(p) == 0:
        raise ValueError("empty input")
    return float(np.sqrt(np.mean((p - a) ** 2)))


def split_sizes(n: int) -> tuple[int, int, int]:
    if n < 5:
        raise ValueError(f"series of length {n} too short to split (need >= 5)")
    n_train = math.floor(0.6 * n)
    n_val = math.floor(0.2 * n)
    return n_train, n_val, n - n_train - n_val


def split_60_20_20(series: TimeSeries) -> tuple[TimeSeries, TimeSeries, TimeSeries]:
    """Chronological train/validation/test slices of 60/20/20 percent."""
    a, b, _ = split_sizes(len(series))
    return series.slice(0, a), series.slice(a, a + b), series.slice(a + b, len(series))


def rolling_origins(lo: int, hi: int, context_length: int, stride: int) -> np.ndarray:
    """Forecast origins ``o`` in ``[max(lo, context_length), hi)`` every ``stride`` steps.

    The forecast for origin ``o`` covers ``z[o], z[o+1], ...`` using
    ``z[o - context_length : o]`` as context.
    """
    first = max(lo, context_length)
    return np.arange(first, hi, max(1, stride))


def rolling_forecast(
    series: TimeSeries,
    lo: int,
    hi: int,
    context_length: int,
    horizon: int,
    forecaster: Callable[[np.ndarray, np.ndarray, np.ndarray | None, np.ndarray | None], np.ndarray],
    stride: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Pool all (prediction, actual) pairs of rolling-origin forecasts whose
    targets fall inside ``[lo, hi)``.

    ``forecaster(contexts, steps, ctx_cov, fut_cov)`` receives (B, L) contexts
    and returns (B, horizon) forecasts. Forecasts are truncated at ``hi``.
    Context may reach back before ``lo``.
    """
    stride = horizon if stride is None else stride
    origins = rolling_origins(lo, hi, context_length, stride)
    if len(origins) == 0:
        raise ValueError(f"no forecast origins in [{lo}, {hi}) with context {context_length}")
    z = series.values
    n = len(z)
    ctx_idx = origins[:, None] + np.arange(-context_length, 0)
    fut_idx = origins[:, None] + np.arange(horizon)
    valid = fut_idx < hi
    fut_clip = np.minimum(fut_idx, n - 1)
    X = series.covariates
    ctx_cov = None if X is None else X[ctx_idx]
    fut_cov = None if X is None else X[fut_clip]
    pred = forecaster(z[ctx_idx], horizon, ctx_cov, fut_cov)
    return pred[valid], z[fut_clip][valid]


def naive_predictor(contexts, horizon, ctx_cov=None, fut_cov=None):
    return np.stack([naive_forecast(c, horizon) for c in contexts])


def model_predictor(params):
    def _predict(contexts, horizon, ctx_cov=None, fut_cov=None):
        mu, _, _ = rollout(params, contexts, horizon, ctx_cov, fut_cov)
        return mu

    return _predict


@dataclass(frozen=True)
class ScenarioConfig:
    """Inputs shared by all scenarios.

    ``train`` is a template; its ``mode`` and ``change_points`` are set per
    scenario. ``manual_change_points`` are full-series indices.
    """

    train: TrainConfig = field(default_factory=TrainConfig)
    mosum: MosumConfig = field(default_factory=lambda: MosumConfig(bandwidth=40, eta=0.1))
    manual_change_points: ChangePointSet | None = None
    eval_stride: int | None = None
    use_validation: bool = True


@dataclass
class ScenarioReport:
    scenario: str
    train_rmse: float
    test_rmse: float
    seed: int
    change_points: list[int] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    rmse_protocol: str = "rolling-origin, multi-step mean path"
    rng_algorithm: str = RNG_ALGORITHM
    train_report: dict | None = None

    def __post_init__(self):
        for v in (self.train_rmse, self.test_rmse):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"RMSE must be finite and non-negative, got {v}")

    @property
    def label(self) -> str:
        return f"({self.scenario}) {SCENARIOS[self.scenario]}"

    def to_json(self) -> str:
        return json.dumps(
            {"version": REPORT_VERSION, "kind": "scenario_report", **asdict(self)}, indent=2, sort_keys=True
        )

    @classmethod
    def from_json(cls, text: str) -> ScenarioReport:
        d = json.loads(text)
        if d.pop("version", None) != REPORT_VERSION or d.pop("kind", None) != "scenario_report":
            raise ValueError("not a version-1 scenario report")
        return cls(**d)


def _restrict(cps: ChangePointSet, n: int) -> ChangePointSet:
    return ChangePointSet(tuple(c for c in cps.indices if c < n))


def run_scenario(scenario: str, series: TimeSeries, cfg: ScenarioConfig) -> ScenarioReport:
    """Train (except for the baseline) on the first 60 percent and report
    rolling-origin RMSE on the training and test slices.

    Scenario IV runs change-point detection on the training slice only.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    n_train, n_val, _ = split_sizes(len(series))
    train_ts, val_ts, _ = split_60_20_20(series)
    tc = cfg.train
    ctx, horizon = tc.context_length, tc.prediction_length
    stride = cfg.eval_stride

    used: list[int] = []
    train_report = None
    if scenario == "I":
        predictor = naive_predictor
        seed = 0
        config = {"context_length": ctx, "prediction_length": horizon}
    else:
        if scenario == "II":
            cps = None
            mode = "vanilla"
        elif scenario == "III":
            if cfg.manual_change_points is None:
                raise ValueError("scenario III needs manual change points")
            cps = _restrict(cfg.manual_change_points, n_train)
            mode = "batchcp"
        else:
            cps = detect_change_points(train_ts, cfg.mosum).change_points
            mode = "batchcp"
        used = [] if cps is None else list(cps.indices)
        tcfg = replace(tc, mode=mode, change_points=cps)
        params, rep = train(train_ts, tcfg, validation=val_ts if cfg.use_validation else None)
        predictor = model_predictor(params)
        seed = tc.seed
        config = {"train": tcfg.snapshot(), "mosum": asdict(cfg.mosum) if scenario == "IV" else None}
        train_report = json.loads(rep.to_json())

    p_tr, a_tr = rolling_forecast(series, 0, n_train, ctx, horizon, predictor, stride)
    p_te, a_te = rolling_forecast(series, n_train + n_val, len(series), ctx, horizon, predictor, stride)
    return ScenarioReport(
        scenario=scenario,
        train_rmse=rmse(p_tr, a_tr),
        test_rmse=rmse(p_te, a_te),
        seed=seed,
        change_points=used,
        config=config,
        train_report=train_report,
    )


def compare(series: TimeSeries, cfg: ScenarioConfig, scenarios=None) -> list[ScenarioReport]:
    """Run I, II, III (when manual change points are given) and IV."""
    if scenarios is None:
        scenarios = ["I", "II"] + (["III"] if cfg.manual_change_points is not None else []) + ["IV"]
    return [run_scenario(s, series, cfg) for s in scenarios]


def comparison_markdown(reports: list[ScenarioReport]) -> str:
    lines = ["| Scenario | Train RMSE | Test RMSE |", "|---|---:|---:|"]
    for r in reports:
        lines.append(f"| {r.label} | {r.train_rmse:.4f} | {r.test_rmse:.4f} |")
    return "\n".join(lines) + "\n"


def comparison_csv(reports: list[ScenarioReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "name", "train_rmse", "test_rmse"])
    for r in reports:
        w.writerow([r.scenario, SCENARIOS[r.scenario], repr(r.train_rmse), repr(r.test_rmse)])
    return buf.getvalue()
