"""Change-point-free training window selection.

Starts are proposed uniformly from ``{0, ..., n - s - 1}`` and rejected
while the window ``[start, start + s - 1]`` contains a change point. With no
change points nothing is ever rejected, so the draw sequence is identical to
plain uniform window sampling from the same generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .changepoint import max_batch_size
from .core import ChangePointSet, WindowSpec

RNG_ALGORITHM = "numpy.PCG64/SeedSequence"


class InfeasibleWindowError(ValueError):
    """No start in the sampling range yields a change-point-free window."""

    def __init__(self, n: int, s: int, blocking: tuple[int, ...]):
        self.n, self.s, self.blocking = n, s, blocking
        super().__init__(
            f"no valid window of length {s} in series of length {n}; "
            f"blocked by change points {list(blocking)}"
        )


class RetryExhaustedError(RuntimeError):
    def __init__(self, retries: int):
        self.retries = retries
        super().__init__(f"no valid window found after {retries} proposals")


class BatchSizeError(ValueError):
    """Requested window length exceeds the change-point-derived maximum."""

    def __init__(self, s: int, s_max: int):
        self.s, self.s_max = s, s_max
        super().__init__(f"batch size {s} exceeds s_max = ceil(min gap / 2) = {s_max}")


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def split_seed(seed: int, names: tuple[str, ...]) -> dict[str, np.random.SeedSequence]:
    """Independent child seed sequences, one per named component."""
    children = np.random.SeedSequence(seed).spawn(len(names))
    return dict(zip(names, children))


def is_valid(start: int, s: int, cps) -> bool:
    """True iff no change point lies in ``[start, start + s - 1]``."""
    end = start + s - 1
    for c in cps:
        if start <= c <= end:
            return False
    return True


def enumerate_valid_starts(n: int, s: int, cps) -> list[int]:
    """All starts in ``[0, n - s - 1]`` whose window avoids every change point."""
    hi = n - s - 1
    if hi < 0:
        return []
    ok = np.ones(hi + 1, dtype=bool)
    for c in cps:
        # windows containing c start in [c - s + 1, c]
        lo_b, hi_b = max(0, c - s + 1), min(hi, c)
        if lo_b <= hi_b:
            ok[lo_b : hi_b + 1] = False
    return np.flatnonzero(ok).tolist()


@dataclass(frozen=True)
class SamplerConfig:
    batch_size: int
    series_length: int
    change_points: ChangePointSet = field(default_factory=ChangePointSet)
    max_retries: int | None = None
    seed: int = 0

    def __post_init__(self):
        n, s = self.series_length, self.batch_size
        if not 1 <= s <= n - 1:
            raise ValueError(f"batch size {s} outside [1, {n - 1}]")
        self.change_points.check_within(n)
        s_max = max_batch_size(self.change_points)
        if s_max is not None and s > s_max:
            raise BatchSizeError(s, s_max)

    @property
    def retries(self) -> int:
        return self.max_retries if self.max_retries is not None else 10 * self.series_length


def check_feasible(cfg: SamplerConfig) -> list[int]:
    valid = enumerate_valid_starts(cfg.series_length, cfg.batch_size, cfg.change_points.indices)
    if not valid:
        raise InfeasibleWindowError(cfg.series_length, cfg.batch_size, cfg.change_points.indices)
    return valid


def _propose(rng: np.random.Generator, n: int, s: int, cps: tuple[int, ...], retries: int) -> int:
    for _ in range(retries):
        start = int(rng.integers(0, n - s))  # {0, ..., n - s - 1}
        if is_valid(start, s, cps):
            return start
    raise RetryExhaustedError(retries)


def sample_valid_batch(cfg: SamplerConfig, rng: np.random.Generator) -> WindowSpec:
    """Draw one window uniformly among the change-point-free windows."""
    check_feasible(cfg)
    start = _propose(rng, cfg.series_length, cfg.batch_size, cfg.change_points.indices, cfg.retries)
    return WindowSpec(start, cfg.batch_size)


class WindowSampler:
    """Stateful sampler for repeated draws; the feasibility check runs once.

    ``reject=False`` gives plain uniform sampling (change points are then only
    counted, never avoided).
    """

    def __init__(self, cfg: SamplerConfig, rng: np.random.Generator, reject: bool = True):
        self.cfg = cfg
        self.rng = rng
        self.reject = reject
        if reject:
            check_feasible(cfg)

    def draw(self) -> WindowSpec:
        n, s = self.cfg.series_length, self.cfg.batch_size
        if self.reject:
            start = _propose(self.rng, n, s, self.cfg.change_points.indices, self.cfg.retries)
        else:
            start = int(self.rng.integers(0, n - s))
        return WindowSpec(start, s)

    def draw_many(self, count: int) -> list[WindowSpec]:
        return [self.draw() for _ in range(count)]
