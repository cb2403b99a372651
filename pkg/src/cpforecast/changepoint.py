"""MOSUM mean-change detection and the maximum admissible batch size."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ChangePointSet, TimeSeries, validate_series


def resolve_bandwidth(bandwidth: float | int, n: int) -> int:
    """Absolute window width ``G`` for a series of length ``n``.

    Integers are absolute widths; reals in (0, 0.5] are fractions of ``n``
    (``G = ceil(bandwidth * n)``).
    """
    if isinstance(bandwidth, (int, np.integer)) and not isinstance(bandwidth, bool):
        G = int(bandwidth)
    else:
        bw = float(bandwidth)
        if bw.is_integer() and bw >= 1:
            G = int(bw)
        elif 0 < bw <= 0.5:
            G = math.ceil(bw * n)
        else:
            raise ValueError(f"relative bandwidth must lie in (0, 0.5], got {bandwidth}")
    if not 1 <= G <= n // 2:
        raise ValueError(f"bandwidth G={G} outside [1, {n // 2}] for n={n}")
    return G


@dataclass(frozen=True)
class MosumConfig:
    """Detection settings.

    ``threshold_method`` is ``"scaled"`` (``sqrt(2 ln(n/G)) * (1 + c)``) or
    ``"asymptotic"`` (the Gumbel-limit critical value at level ``alpha``).
    ``threshold``, when set, overrides both.
    """

    bandwidth: float | int = 0.2
    eta: float = 0.1
    alpha: float = 0.1
    threshold_method: str = "scaled"
    threshold_scale: float = 0.3
    threshold: float | None = None

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.threshold_method not in ("scaled", "asymptotic"):
            raise ValueError(f"unknown threshold_method {self.threshold_method!r}")


@dataclass(frozen=True, eq=False)
class MosumResult:
    """Statistic, threshold and detections.

    ``statistic[j]`` belongs to split position ``offset + j``: it compares the
    ``G`` values before that position with the ``G`` values starting at it.
    """

    statistic: np.ndarray
    offset: int
    bandwidth: int
    threshold: float
    sigma: float
    change_points: ChangePointSet

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + len(self.statistic))

    def statistic_at(self, k: int) -> float:
        return float(self.statistic[k - self.offset])


def _values(series) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values
    return np.asarray(series, dtype=np.float64).reshape(-1)


def difference_sigma(z: np.ndarray) -> float:
    """Noise scale from first differences: ``sigma^2 = mean(diff(z)^2) / 2``.

    Mean shifts contribute only a handful of large differences, so this stays
    close to the within-segment noise level.
    """
    if len(z) < 2:
        return 0.0
    return float(np.sqrt(np.mean(np.diff(z) ** 2) / 2.0))


def mosum_statistic(series, G: int, sigma: float | None = None) -> np.ndarray:
    """Two-sided moving-sum statistic.

    For each split position ``k`` in ``[G, n - G]``::

        T_k = |sum(z[k:k+G]) - sum(z[k-G:k])| / (sigma * sqrt(2 G))

    Entry ``j`` of the result belongs to ``k = G + j``. A zero ``sigma``
    (constant input) yields all zeros.
    """
    z = _values(series)
    n = len(z)
    if not 1 <= G <= n // 2:
        raise ValueError(f"bandwidth G={G} outside [1, {n // 2}] for n={n}")
    if sigma is None:
        sigma = difference_sigma(z)
    m = n - 2 * G + 1
    if sigma == 0.0:
        return np.zeros(m)
    csum = np.concatenate(([0.0], np.cumsum(z)))
    k = np.arange(G, n - G + 1)
    right = csum[k + G] - csum[k]
    left = csum[k] - csum[k - G]
    return np.abs(right - left) / (sigma * math.sqrt(2 * G))


def critical_value(n: int, G: int, cfg: MosumConfig) -> float:
    if cfg.threshold is not None:
        return float(cfg.threshold)
    ratio = n / G
    if ratio <= 1:
        raise ValueError("n / G must exceed 1")
    a = math.sqrt(2 * math.log(ratio))
    if cfg.threshold_method == "scaled":
        return a * (1 + cfg.threshold_scale)
    # symmetric bandwidths: K = 1, so log((K^2+K+1)/(K+1)) = log(3/2)
    b = 2 * math.log(ratio) + 0.5 * math.log(math.log(ratio)) + math.log(1.5) - 0.5 * math.log(math.pi)
    return (b - math.log(math.log(1 / math.sqrt(1 - cfg.alpha)))) / a


def eta_local_maxima(stat: np.ndarray, threshold: float, radius: int) -> np.ndarray:
    """Indices ``j`` with ``stat[j] > threshold`` that are the maximum of
    ``stat[j - radius : j + radius + 1]`` (the first maximiser on ties)."""
    m = len(stat)
    out = []
    for j in np.flatnonzero(stat > threshold):
        lo, hi = max(0, j - radius), min(m, j + radius + 1)
        win = stat[lo:hi]
        if lo + int(np.argmax(win)) == j:
            out.append(int(j))
    return np.asarray(out, dtype=np.int64)


def detect_change_points(series, cfg: MosumConfig = MosumConfig()) -> MosumResult:
    """Detect mean changes with the MOSUM statistic and the eta-criterion.

    A split position ``k`` is reported when ``T_k`` exceeds the threshold and
    is the largest value within ``k +/- ceil(eta * G)``. Reported indices are
    first indices of the new regime.
    """
    if isinstance(series, TimeSeries):
        validate_series(series)
    z = _values(series)
    n = len(z)
    if n < 2:
        raise ValueError("series too short for change-point detection")
    G = resolve_bandwidth(cfg.bandwidth, n)
    if n < 2 * G:
        raise ValueError(f"series of length {n} shorter than 2G={2 * G}")
    sigma = difference_sigma(z)
    stat = mosum_statistic(z, G, sigma)
    tau = critical_value(n, G, cfg)
    radius = math.ceil(cfg.eta * G)
    found = eta_local_maxima(stat, tau, radius) + G
    return MosumResult(
        statistic=stat,
        offset=G,
        bandwidth=G,
        threshold=tau,
        sigma=sigma,
        change_points=ChangePointSet(tuple(int(k) for k in found)),
    )


def max_batch_size(cps: ChangePointSet | Sequence[int]) -> int | None:
    """Largest admissible window length: half the smallest change-point gap,
    rounded up.

    Returns ``None`` when fewer than two change points are given, meaning the
    window length is unconstrained and left to the caller.
    """
    idx = sorted(int(c) for c in cps)
    if len(idx) < 2:
        return None
    # sorted input: the closest pair is always adjacent
    gap = min(b - a for a, b in zip(idx, idx[1:]))
    if gap == 0:
        raise ValueError("duplicate change points")
    return math.ceil(gap / 2)


def read_change_points(path: str | os.PathLike) -> ChangePointSet:
    """Parse the one-index-per-line format; blank lines and ``#`` comments are skipped."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                out.append(int(text))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not an integer index: {text!r}") from None
    return ChangePointSet(tuple(out))


def write_change_points(path: str | os.PathLike, cps: ChangePointSet | Sequence[int]) -> None:
    with open(path, "w") as fh:
        for c in sorted(int(c) for c in cps):
            fh.write(f"{c}\n")
