"""Training loop (plain or change-point-free window selection), ancestral
sampling prediction and the last-value baseline."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .changepoint import max_batch_size
from .core import ChangePointSet, GaussianForecast, TimeSeries, validate_series
from .sampler import RNG_ALGORITHM, BatchSizeError, SamplerConfig, WindowSampler, make_rng, split_seed

log = logging.getLogger(__name__)

REPORT_VERSION = 1
SCALE_FLOOR = 1e-8


class NumericalError(RuntimeError):
    def __init__(self, message: str, epoch: int | None = None, window: int | None = None):
        self.epoch, self.window = epoch, window
        super().__init__(message)


@dataclass(frozen=True)
class TrainConfig:
    """Training settings.

    ``context_length`` defaults to ``batch_size - prediction_length`` and
    ``prediction_length`` to ``max(1, batch_size // 5)``. ``change_points``
    is required in ``batchcp`` mode; in ``vanilla`` mode it is only used to
    count windows that contain a change point.
    """

    batch_size: int = 50
    prediction_length: int | None = None
    context_length: int | None = None
    mode: str = "vanilla"
    change_points: ChangePointSet | tuple[ChangePointSet, ...] | None = None
    epochs: int = 30
    windows_per_epoch: int = 256
    minibatch: int = 16
    seed: int = 0
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    hidden: int = 4
    dense: int = 3
    num_layers: int = 1
    sigma_floor: float = 1e-6
    scaling: str = "window"
    loss_on_full_window: bool = False
    patience: int | None = 5

    def __post_init__(self):
        s = self.batch_size
        if s < 3:
            raise ValueError("batch_size must be >= 3")
        pl = self.prediction_length if self.prediction_length is not None else max(1, s // 5)
        cl = self.context_length if self.context_length is not None else s - pl
        object.__setattr__(self, "prediction_length", pl)
        object.__setattr__(self, "context_length", cl)
        if pl < 1 or cl < 1 or cl + pl != s:
            raise ValueError(f"context_length ({cl}) + prediction_length ({pl}) must equal batch_size ({s})")
        if self.mode not in ("vanilla", "batchcp"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "batchcp" and self.change_points is None:
            raise ValueError("batchcp mode requires change_points")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.scaling not in ("global", "window"):
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if self.mode == "batchcp":
            for cps in self.change_point_sets(None):
                s_max = max_batch_size(cps)
                if s_max is not None and s > s_max:
                    raise BatchSizeError(s, s_max)

    def change_point_sets(self, n_series: int | None) -> list[ChangePointSet]:
        cps = self.change_points
        if cps is None:
            sets = [ChangePointSet()]
        elif isinstance(cps, ChangePointSet):
            sets = [cps]
        else:
            sets = list(cps)
        if n_series is None:
            return sets
        if len(sets) == 1:
            return sets * n_series
        if len(sets) != n_series:
            raise ValueError(f"{len(sets)} change-point sets for {n_series} series")
        return sets

    def snapshot(self) -> dict:
        d = asdict(self)
        cps = self.change_points
        if isinstance(cps, ChangePointSet):
            d["change_points"] = list(cps.indices)
        elif cps is not None:
            d["change_points"] = [list(c.indices) for c in cps]
        return d


@dataclass
class TrainReport:
    mode: str
    seed: int
    epoch_nll: list[float] = field(default_factory=list)
    validation_nll: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    cp_windows: int = 0
    total_windows: int = 0
    wall_seconds: float = 0.0
    rng_algorithm: str = RNG_ALGORITHM
    window_starts: list[int] = field(default_factory=list, repr=False)

    def comparable(self) -> dict:
        """Fields that must agree between runs that saw the same windows."""
        d = asdict(self)
        for k in ("mode", "wall_seconds"):
            d.pop(k)
        return d

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("window_starts")
        return json.dumps({"version": REPORT_VERSION, "kind": "train_report", **d}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> TrainReport:
        d = json.loads(text)
        if d.pop("version", None) != REPORT_VERSION or d.pop("kind", None) != "train_report":
            raise ValueError("not a version-1 train report")
        return cls(**d)


def fit_scaler(series: Sequence[TimeSeries], mode: str) -> nn.Scaler:
    z = np.concatenate([s.values for s in series])
    covs = [s.covariates for s in series if s.covariates is not None]
    if covs:
        X = np.concatenate(covs)
        cov_loc = tuple(float(v) for v in X.mean(axis=0))
        cov_scale = tuple(float(max(v, SCALE_FLOOR)) for v in X.std(axis=0))
    else:
        cov_loc = cov_scale = ()
    return nn.Scaler(
        mode=mode,
        target_loc=float(z.mean()),
        target_scale=float(max(z.std(), SCALE_FLOOR)),
        cov_loc=cov_loc,
        cov_scale=cov_scale,
    )


def _target_affine(scaler: nn.Scaler, z_ctx: np.ndarray):
    """Per-row (loc, scale) for target rows ``z_ctx`` of shape (B, L)."""
    B = z_ctx.shape[0]
    if scaler.mode == "window":
        loc = z_ctx.mean(axis=1)
        scale = np.maximum(z_ctx.std(axis=1), SCALE_FLOOR)
        return loc, scale
    return np.full(B, scaler.target_loc), np.full(B, scaler.target_scale)


def _scale_cov(scaler: nn.Scaler, X: np.ndarray | None):
    if X is None:
        return None
    return (X - np.asarray(scaler.cov_loc)) / np.asarray(scaler.cov_scale)


def window_arrays(series: TimeSeries, starts: np.ndarray, s: int, context_length: int, scaler: nn.Scaler):
    """Teacher-forced network inputs and targets for windows of length ``s``.

    Step ``j`` (``0 <= j < s - 1``) reads ``z[start + j]`` and the covariates
    at ``start + j + 1`` and is scored against ``z[start + j + 1]``.
    Returns ``(inputs, targets, log_scale)`` where ``log_scale`` (B,) converts
    per-step NLL back to the original units.
    """
    idx = starts[:, None] + np.arange(s)
    z = series.values[idx]
    loc, scale = _target_affine(scaler, z[:, :context_length])
    zn = (z - loc[:, None]) / scale[:, None]
    parts = [zn[:, :-1, None]]
    if series.covariates is not None:
        parts.append(_scale_cov(scaler, series.covariates[idx[:, 1:]]))
    return np.concatenate(parts, axis=2), zn[:, 1:], np.log(scale)


def _window_has_cp(start: int, s: int, cps: np.ndarray) -> bool:
    return bool(np.any((cps >= start) & (cps <= start + s - 1)))


def _validation_starts(n: int, s: int, stride: int) -> np.ndarray:
    return np.arange(0, n - s + 1, max(1, stride))


def evaluate_nll(params: nn.ModelParams, series: TimeSeries, starts: np.ndarray, cfg: TrainConfig) -> float:
    """Mean per-step NLL (original units) over the given windows."""
    if len(starts) == 0:
        return float("nan")
    x, z, log_scale = window_arrays(series, starts, cfg.batch_size, cfg.context_length, params.scaler)
    loss_start = 0 if cfg.loss_on_full_window else cfg.context_length - 1
    mu, sigma = nn.forward(params, x)
    nll = nn.gaussian_nll(z[:, loss_start:], mu[:, loss_start:], sigma[:, loss_start:])
    nll = nll + log_scale[:, None]
    return float(nll.mean())


def train(
    series: TimeSeries | Sequence[TimeSeries],
    cfg: TrainConfig,
    validation: TimeSeries | None = None,
) -> tuple[nn.ModelParams, TrainReport]:
    """Fit the network by minimising the summed Gaussian NLL of each
    window's prediction range.

    Windows are drawn round-robin across ``series``. In ``batchcp`` mode every
    window avoids the configured change points. With ``validation`` and a
    ``patience``, the parameters of the epoch with the lowest validation NLL
    are returned and training stops after ``patience`` epochs without gain.
    """
    series_list = [series] if isinstance(series, TimeSeries) else list(series)
    if not series_list:
        raise ValueError("no training series")
    for ts in series_list:
        validate_series(ts)
        if len(ts) <= cfg.batch_size + 1:
            raise ValueError(f"series {ts.name!r} of length {len(ts)} too short for batch size {cfg.batch_size}")
    d = series_list[0].n_covariates
    if any(ts.n_covariates != d for ts in series_list):
        raise ValueError("all series must have the same number of covariates")

    s = cfg.batch_size
    seeds = split_seed(cfg.seed, ("init", "sampler", "predict"))
    scaler = fit_scaler(series_list, cfg.scaling)
    net = nn.NetConfig(
        input_dim=1 + d,
        hidden=cfg.hidden,
        dense=cfg.dense,
        num_layers=cfg.num_layers,
        sigma_floor=cfg.sigma_floor,
    )
    params = nn.init_params(net, make_rng(seeds["init"]), scaler)
    report = TrainReport(mode=cfg.mode, seed=cfg.seed)

    cp_sets = cfg.change_point_sets(len(series_list))
    cp_arrays = [c.as_array() for c in cp_sets]
    sampler_rng = make_rng(seeds["sampler"])
    samplers = []
    for ts, cps in zip(series_list, cp_sets):
        if cfg.mode == "batchcp":
            scfg = SamplerConfig(batch_size=s, series_length=len(ts), change_points=cps)
            samplers.append(WindowSampler(scfg, sampler_rng, reject=True))
        else:
            scfg = SamplerConfig(batch_size=s, series_length=len(ts))
            samplers.append(WindowSampler(scfg, sampler_rng, reject=False))

    adam = nn.AdamState.fresh(params, lr=cfg.learning_rate)
    loss_start = 0 if cfg.loss_on_full_window else cfg.context_length - 1
    n_scored = s - 1 - loss_start

    val_starts = None
    if validation is not None and len(validation) >= s:
        val_starts = _validation_starts(len(validation), s, cfg.prediction_length)
    best = (math.inf, params, None)
    stale = 0

    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        # round-robin assignment of windows to series
        picks: list[list[int]] = [[] for _ in series_list]
        order = []
        for w in range(cfg.windows_per_epoch):
            i = w % len(series_list)
            start = samplers[i].draw().start
            picks[i].append(start)
            order.append((i, start))
            if _window_has_cp(start, s, cp_arrays[i]):
                report.cp_windows += 1
        report.window_starts.extend(st for _, st in order)
        report.total_windows += len(order)

        epoch_nll = 0.0
        for b0 in range(0, len(order), cfg.minibatch):
            chunk = order[b0 : b0 + cfg.minibatch]
            grads = None
            batch_loss = 0.0
            for i in sorted({i for i, _ in chunk}):
                starts = np.array([st for j, st in chunk if j == i])
                x, z, log_scale = window_arrays(series_list[i], starts, s, cfg.context_length, scaler)
                loss, g = nn.window_loss_and_grads(params, x, z, loss_start)
                batch_loss += loss + n_scored * float(log_scale.sum())
                grads = g if grads is None else {k: grads[k] + g[k] for k in grads}
            if not math.isfinite(batch_loss) or not all(np.all(np.isfinite(v)) for v in grads.values()):
                raise NumericalError(
                    f"non-finite loss in epoch {epoch}, windows {b0}..{b0 + len(chunk) - 1}", epoch, b0
                )
            grads = {k: v / len(chunk) for k, v in grads.items()}
            if cfg.optimizer == "adam":
                params, adam = nn.adam_step(params, grads, adam)
            else:
                params = nn.sgd_step(params, grads, cfg.learning_rate)
            epoch_nll += batch_loss
        report.epoch_nll.append(epoch_nll / (len(order) * n_scored))

        if val_starts is not None:
            v = evaluate_nll(params, validation, val_starts, cfg)
            report.validation_nll.append(v)
            if v < best[0]:
                best = (v, params, epoch)
                stale = 0
            else:
                stale += 1
            log.debug("epoch %d train %.4f val %.4f", epoch, report.epoch_nll[-1], v)
            if cfg.patience is not None and stale >= cfg.patience:
                break
        else:
            log.debug("epoch %d train %.4f", epoch, report.epoch_nll[-1])

    if val_starts is not None and best[2] is not None:
        params = best[1]
        report.best_epoch = best[2]
    report.wall_seconds = time.perf_counter() - t0
    return params, report


def _step_all_layers(params: nn.ModelParams, x, state):
    new_state = []
    inp = x
    for layer, (h, c) in enumerate(state):
        h, c = nn.lstm_step(params, inp, h, c, layer)
        new_state.append((h, c))
        inp = h
    return inp, new_state


def rollout(
    params: nn.ModelParams,
    context: np.ndarray,
    horizon: int,
    context_covariates: np.ndarray | None = None,
    future_covariates: np.ndarray | None = None,
    noise: np.ndarray | None = None,
):
    """Batched autoregressive forecast in original units.

    ``context`` is (B, L). Without ``noise`` the mean is fed back at every
    step; with ``noise`` (B, horizon) of standard normals the fed-back value
    is ``mu + sigma * noise`` (ancestral sampling).
    Returns ``(mu, sigma, fed)``, each (B, horizon).
    """
    ctx = np.asarray(context, dtype=np.float64)
    B, L = ctx.shape
    scaler = params.scaler
    loc, scale = _target_affine(scaler, ctx)
    zn = (ctx - loc[:, None]) / scale[:, None]
    has_cov = params.config.input_dim > 1
    if has_cov and (context_covariates is None or future_covariates is None):
        raise ValueError("model uses covariates; pass context and future covariates")
    cc = _scale_cov(scaler, context_covariates) if has_cov else None
    fc = _scale_cov(scaler, future_covariates) if has_cov else None

    H = params.config.hidden
    state = [(np.zeros((B, H)), np.zeros((B, H))) for _ in range(params.config.num_layers)]
    if L > 1:
        parts = [zn[:, :-1, None]]
        if has_cov:
            parts.append(cc[:, 1:])
        _, _, finals = nn._lstm_forward(params, np.concatenate(parts, axis=2))
        state = finals

    mu = np.empty((B, horizon))
    sigma = np.empty((B, horizon))
    fed = np.empty((B, horizon))
    prev = zn[:, -1]
    for h in range(horizon):
        x = prev[:, None] if not has_cov else np.concatenate([prev[:, None], fc[:, h]], axis=1)
        top, state = _step_all_layers(params, x, state)
        m, sd = nn.head_forward(params, top)
        mu[:, h], sigma[:, h] = m, sd
        prev = m if noise is None else m + sd * noise[:, h]
        fed[:, h] = prev
    back = lambda a: loc[:, None] + scale[:, None] * a  # noqa: E731
    return back(mu), sigma * scale[:, None], back(fed)


def predict(
    params: nn.ModelParams,
    context,
    horizon: int,
    num_samples: int = 100,
    rng: np.random.Generator | None = None,
    context_covariates=None,
    future_covariates=None,
) -> GaussianForecast:
    """Forecast ``horizon`` steps after ``context``.

    ``mu``/``sigma`` follow the mean path (each step's mean fed back), so
    they do not depend on ``num_samples``. ``traces`` holds ``num_samples``
    ancestral-sampling paths where every sampled value feeds the next step.
    """
    if isinstance(context, TimeSeries):
        if context_covariates is None:
            context_covariates = context.covariates
        context = context.values
    ctx = np.asarray(context, dtype=np.float64).reshape(-1)
    if len(ctx) == 0:
        raise ValueError("empty context")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = rng if rng is not None else make_rng(0)
    cc = None if context_covariates is None else np.asarray(context_covariates, float)[None]
    fc = None if future_covariates is None else np.asarray(future_covariates, float)[None]
    mu, sigma, _ = rollout(params, ctx[None], horizon, cc, fc)
    traces = np.empty((num_samples, horizon))
    if num_samples > 0:
        noise = rng.standard_normal((num_samples, horizon))
        rep = lambda a: None if a is None else np.repeat(a, num_samples, axis=0)  # noqa: E731
        _, _, traces = rollout(params, np.repeat(ctx[None], num_samples, axis=0), horizon, rep(cc), rep(fc), noise)
    return GaussianForecast(mu=mu[0], sigma=sigma[0], traces=traces)


def naive_forecast(context, horizon: int) -> np.ndarray:
    """Repeat the last observed value ``horizon`` times."""
    ctx = np.asarray(context, dtype=np.float64).reshape(-1)
    if len(ctx) == 0:
        raise ValueError("empty context")
    return np.full(horizon, ctx[-1])
