"""LSTM -> dense(ReLU) -> Gaussian head, with exact BPTT gradients and Adam.

Every function accepts a batch of windows: inputs have shape ``(B, T, d)``
and targets ``(B, T)``. A single window may be passed as ``(T, d)`` /
``(T,)``. Arithmetic is float64 throughout.

Parameter layout (gate order ``i, f, g, o`` along the ``4H`` axis)::

    lstm{l}.W_x  (d_l, 4H)    lstm{l}.W_h  (H, 4H)    lstm{l}.b  (4H,)
    dense.W      (H, D)       dense.b      (D,)
    head.W       (D, 2)       head.b       (2,)       # columns: mu, sigma
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)
CHECKPOINT_MAGIC = b"CPFCKPT\x01"


@dataclass(frozen=True)
class NetConfig:
    input_dim: int = 1
    hidden: int = 4
    dense: int = 3
    num_layers: int = 1
    sigma_floor: float = 1e-6

    def __post_init__(self):
        if min(self.input_dim, self.hidden, self.dense, self.num_layers) < 1:
            raise ValueError(f"all layer sizes must be >= 1: {self}")
        if not self.sigma_floor > 0:
            raise ValueError("sigma_floor must be positive")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        H, D = self.hidden, self.dense
        out: dict[str, tuple[int, ...]] = {}
        for layer in range(self.num_layers):
            d_in = self.input_dim if layer == 0 else H
            out[f"lstm{layer}.W_x"] = (d_in, 4 * H)
            out[f"lstm{layer}.W_h"] = (H, 4 * H)
            out[f"lstm{layer}.b"] = (4 * H,)
        out["dense.W"] = (H, D)
        out["dense.b"] = (D,)
        out["head.W"] = (D, 2)
        out["head.b"] = (2,)
        return out


@dataclass(frozen=True)
class Scaler:
    """Affine standardisation of the target and covariate channels.

    ``mode="global"`` uses the stored statistics; ``mode="window"`` ignores
    ``target_loc``/``target_scale`` and standardises each window by its own
    conditioning range.
    """

    mode: str = "global"
    target_loc: float = 0.0
    target_scale: float = 1.0
    cov_loc: tuple[float, ...] = ()
    cov_scale: tuple[float, ...] = ()


@dataclass(eq=False)
class ModelParams:
    config: NetConfig
    weights: dict[str, np.ndarray]
    scaler: Scaler = field(default_factory=Scaler)

    def __post_init__(self):
        shapes = self.config.shapes()
        if list(self.weights) != list(shapes):
            raise ValueError(f"parameter names {list(self.weights)} do not match {list(shapes)}")
        for name, shape in shapes.items():
            if self.weights[name].shape != shape:
                raise ValueError(f"{name}: shape {self.weights[name].shape}, expected {shape}")

    def copy(self) -> ModelParams:
        return ModelParams(self.config, {k: v.copy() for k, v in self.weights.items()}, self.scaler)

    def with_weights(self, weights: dict[str, np.ndarray]) -> ModelParams:
        return ModelParams(self.config, weights, self.scaler)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights.values()])


GradientBundle = dict  # name -> ndarray, congruent with ModelParams.weights


def init_params(cfg: NetConfig, rng: np.random.Generator, scaler: Scaler | None = None) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases except a
    +1 forget-gate bias."""
    weights = {}
    H = cfg.hidden
    for name, shape in cfg.shapes().items():
        if name.endswith(".b"):
            b = np.zeros(shape)
            if name.startswith("lstm"):
                b[H : 2 * H] = 1.0
            weights[name] = b
        else:
            bound = 1.0 / math.sqrt(shape[0])
            weights[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams(cfg, weights, scaler or Scaler())


def zeros_like(params: ModelParams) -> GradientBundle:
    return {k: np.zeros_like(v) for k, v in params.weights.items()}


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x):
    return np.logaddexp(0.0, x)


def _gates(a: np.ndarray, H: int):
    i = sigmoid(a[..., :H])
    f = sigmoid(a[..., H : 2 * H])
    g = np.tanh(a[..., 2 * H : 3 * H])
    o = sigmoid(a[..., 3 * H :])
    return i, f, g, o


def lstm_step(params: ModelParams, x_t, h_prev, c_prev, layer: int = 0):
    """One LSTM cell update; returns ``(h_t, c_t)``."""
    W_x = params.weights[f"lstm{layer}.W_x"]
    W_h = params.weights[f"lstm{layer}.W_h"]
    b = params.weights[f"lstm{layer}.b"]
    x_t, h_prev, c_prev = np.asarray(x_t, float), np.asarray(h_prev, float), np.asarray(c_prev, float)
    if x_t.shape[-1] != W_x.shape[0] or h_prev.shape[-1] != W_h.shape[0] or c_prev.shape != h_prev.shape:
        raise ValueError(
            f"shape mismatch: x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} for layer {layer}"
        )
    i, f, g, o = _gates(x_t @ W_x + h_prev @ W_h + b, W_h.shape[0])
    c_t = f * c_prev + i * g
    return o * np.tanh(c_t), c_t


def head_forward(params: ModelParams, h_t):
    """Map hidden state(s) to ``(mu, sigma)``; sigma = softplus + floor."""
    mu, sigma, _ = _head(params, np.asarray(h_t, float))
    return mu, sigma


def _head(params: ModelParams, h):
    w = params.weights
    u = h @ w["dense.W"] + w["dense.b"]
    r = np.maximum(u, 0.0)
    p = r @ w["head.W"] + w["head.b"]
    mu = p[..., 0]
    sigma = softplus(p[..., 1]) + params.config.sigma_floor
    return mu, sigma, (h, u, r, p)


def gaussian_nll(z, mu, sigma):
    """Negative log density of ``N(mu, sigma^2)`` at ``z`` (elementwise)."""
    sigma = np.asarray(sigma, float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    r = (np.asarray(z, float) - mu) / sigma
    out = HALF_LOG_2PI + np.log(sigma) + 0.5 * r * r
    return float(out) if np.ndim(out) == 0 else out


def _as_batch(inputs, targets=None):
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if targets is None:
        return x, None, single
    z = np.asarray(targets, dtype=np.float64)
    if single:
        z = z[None]
    if z.shape != x.shape[:2]:
        raise ValueError(f"targets shape {z.shape} does not match inputs {x.shape}")
    return x, z, single


def _lstm_forward(params: ModelParams, x: np.ndarray, state=None):
    """Run every layer over ``x`` (B, T, d); returns top-layer outputs,
    per-layer caches and final states."""
    B, T, _ = x.shape
    H = params.config.hidden
    caches = []
    finals = []
    layer_in = x
    for layer in range(params.config.num_layers):
        W_x = params.weights[f"lstm{layer}.W_x"]
        W_h = params.weights[f"lstm{layer}.W_h"]
        pre = layer_in @ W_x + params.weights[f"lstm{layer}.b"]
        if state is None:
            h = np.zeros((B, H))
            c = np.zeros((B, H))
        else:
            h, c = state[layer]
        hs = np.empty((B, T, H))
        cs = np.empty((B, T + 1, H))
        ifgo = np.empty((B, T, 4 * H))
        hprev = np.empty((B, T, H))
        cs[:, 0] = c
        for t in range(T):
            hprev[:, t] = h
            a = pre[:, t] + h @ W_h
            i, f, g, o = _gates(a, H)
            c = f * c + i * g
            h = o * np.tanh(c)
            ifgo[:, t, :H], ifgo[:, t, H : 2 * H], ifgo[:, t, 2 * H : 3 * H], ifgo[:, t, 3 * H :] = i, f, g, o
            hs[:, t] = h
            cs[:, t + 1] = c
        caches.append((layer_in, hprev, cs, ifgo))
        finals.append((h, c))
        layer_in = hs
    return layer_in, caches, finals


def forward(params: ModelParams, inputs, state=None):
    """Teacher-forced pass; returns ``(mu, sigma)`` each of shape (B, T)."""
    x, _, single = _as_batch(inputs)
    h_top, _, _ = _lstm_forward(params, x, state)
    mu, sigma, _ = _head(params, h_top)
    if single:
        return mu[0], sigma[0]
    return mu, sigma


def window_loss_and_grads(params: ModelParams, inputs, targets, loss_start: int = 0):
    """Summed Gaussian NLL over steps ``t >= loss_start`` of every window, and
    its exact gradient with respect to all weights.

    Parameters
    ----------
    inputs : array (T, d) or (B, T, d)
        Teacher-forced inputs: previous target followed by covariates.
    targets : array (T,) or (B, T)
    loss_start : int
        First step whose likelihood is scored (start of the prediction range).
    """
    x, z, _ = _as_batch(inputs, targets)
    B, T, _ = x.shape
    if T < 2:
        raise ValueError("window must span at least 2 steps")
    if not 0 <= loss_start < T:
        raise ValueError(f"loss_start {loss_start} outside [0, {T})")
    cfg = params.config
    H = cfg.hidden
    w = params.weights

    h_top, caches, _ = _lstm_forward(params, x)
    mu, sigma, (h, u, r, p) = _head(params, h_top)

    mask = np.zeros((B, T))
    mask[:, loss_start:] = 1.0
    resid = z - mu
    nll = HALF_LOG_2PI + np.log(sigma) + 0.5 * (resid / sigma) ** 2
    loss = float(np.sum(nll * mask))

    grads = {}
    dmu = -resid / sigma**2 * mask
    dsigma = (1.0 / sigma - resid**2 / sigma**3) * mask
    dp = np.stack([dmu, dsigma * sigmoid(p[..., 1])], axis=-1)  # (B, T, 2)
    grads["head.W"] = np.einsum("btd,btk->dk", r, dp)
    grads["head.b"] = dp.sum(axis=(0, 1))
    du = (dp @ w["head.W"].T) * (u > 0)
    grads["dense.W"] = np.einsum("bth,btd->hd", h, du)
    grads["dense.b"] = du.sum(axis=(0, 1))
    dH = du @ w["dense.W"].T

    for layer in reversed(range(cfg.num_layers)):
        layer_in, hprev, cs, ifgo = caches[layer]
        W_x = w[f"lstm{layer}.W_x"]
        W_h = w[f"lstm{layer}.W_h"]
        dA = np.empty((B, T, 4 * H))
        dW_h = np.zeros_like(W_h)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            i, f, g, o = ifgo[:, t, :H], ifgo[:, t, H : 2 * H], ifgo[:, t, 2 * H : 3 * H], ifgo[:, t, 3 * H :]
            tc = np.tanh(cs[:, t + 1])
            dh = dH[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            da = dA[:, t]
            da[:, :H] = dc * g * i * (1.0 - i)
            da[:, H : 2 * H] = dc * cs[:, t] * f * (1.0 - f)
            da[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
            da[:, 3 * H :] = dh * tc * o * (1.0 - o)
            dW_h += hprev[:, t].T @ da
            dh_next = da @ W_h.T
            dc_next = dc * f
        grads[f"lstm{layer}.W_x"] = np.einsum("btd,btk->dk", layer_in, dA)
        grads[f"lstm{layer}.W_h"] = dW_h
        grads[f"lstm{layer}.b"] = dA.sum(axis=(0, 1))
        dH = dA @ W_x.T

    ordered = {name: grads[name] for name in w}
    return loss, ordered


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: ModelParams, **hyper) -> AdamState:
        return cls(zeros_like(params), zeros_like(params), **hyper)


def adam_step(params: ModelParams, grads: GradientBundle, state: AdamState):
    """One bias-corrected Adam update. Inputs are not mutated."""
    t = state.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_w, new_m, new_v = {}, {}, {}
    for k, w in params.weights.items():
        g = grads[k]
        m = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[k] + (1.0 - state.beta2) * (g * g)
        new_w[k] = w - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_m[k], new_v[k] = m, v
    return params.with_weights(new_w), replace(state, m=new_m, v=new_v, step=t)


def sgd_step(params: ModelParams, grads: GradientBundle, lr: float) -> ModelParams:
    return params.with_weights({k: w - lr * grads[k] for k, w in params.weights.items()})


def save_checkpoint(path, params: ModelParams) -> None:
    """Binary checkpoint: magic, length-prefixed JSON header, then the weight
    arrays in declared order as little-endian float64."""
    header = {
        "version": 1,
        "config": asdict(params.config),
        "scaler": asdict(params.scaler),
        "arrays": [[k, list(v.shape)] for k, v in params.weights.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for v in params.weights.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (size,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(size))
        if header.get("version") != 1:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        weights = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError(f"{path}: truncated at {name}")
            weights[name] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
    scaler = header["scaler"]
    scaler["cov_loc"] = tuple(scaler["cov_loc"])
    scaler["cov_scale"] = tuple(scaler["cov_scale"])
    return ModelParams(NetConfig(**header["config"]), weights, Scaler(**scaler))
