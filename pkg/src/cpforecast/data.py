"""CSV ingestion and synthetic piecewise-regime series with known change points."""

from __future__ import annotations

import csv
import os
from dataclasses import asdict, dataclass

import numpy as np

from .core import ChangePointSet, TimeSeries, validate_series

SYNTHETIC_CHANGE_POINTS = (200, 300, 600, 700, 800, 1400, 1500, 1600, 1700, 2100, 2400, 2600, 2900)
FOOTBALL_CHANGE_POINTS = (31, 65, 99, 133, 157, 174, 191, 208)


class CsvError(ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row, self.column = row, column
        super().__init__(message)


@dataclass(frozen=True)
class SyntheticSpec:
    """Piecewise-linear mean plus Gaussian noise.

    Segment ``j`` covers ``[c_{j-1}, c_j)`` (with ``c_{-1} = 0``, ``c_k = n``)
    and has value ``means[j] + slopes[j] * (t - segment_start) + noise``.
    ``reset_walk=True`` replaces the noise with a random walk restarted at
    every change point, which mimics cumulative season statistics.
    """

    n: int
    change_points: tuple[int, ...]
    means: tuple[float, ...]
    slopes: tuple[float, ...] | None = None
    noise_std: float = 1.0
    seed: int = 7
    reset_walk: bool = False

    def __post_init__(self):
        object.__setattr__(self, "change_points", tuple(int(c) for c in self.change_points))
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        if self.slopes is None:
            object.__setattr__(self, "slopes", (0.0,) * len(self.means))
        else:
            object.__setattr__(self, "slopes", tuple(float(a) for a in self.slopes))
        ChangePointSet(self.change_points)
        k = len(self.change_points)
        if len(self.means) != k + 1 or len(self.slopes) != k + 1:
            raise ValueError(f"{k} change points need {k + 1} segment means and slopes")
        if any(not 0 < c < self.n - 1 for c in self.change_points):
            raise ValueError(f"change points must lie strictly inside (0, {self.n - 1})")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")

    @property
    def segment_bounds(self) -> list[tuple[int, int]]:
        edges = (0,) + self.change_points + (self.n,)
        return list(zip(edges[:-1], edges[1:]))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> SyntheticSpec:
        return cls(**d)


def regime_synthetic_spec(seed: int = 7, noise_std: float = 1.0) -> SyntheticSpec:
    """3000 samples, 13 mean changes at fixed indices.

    Levels alternate between a low and a high band; every jump is at least
    4 noise standard deviations so MOSUM with ``G = 40`` recovers all of them.
    """
    means = (0.0, 5.0, 1.0, 6.0, 0.5, 5.5, -0.5, 4.5, 0.0, 6.0, 1.0, 5.0, -1.0, 4.0)
    return SyntheticSpec(
        n=3000,
        change_points=SYNTHETIC_CHANGE_POINTS,
        means=tuple(m * noise_std for m in means),
        noise_std=noise_std,
        seed=seed,
    )


def football_like_spec(seed: int = 7) -> SyntheticSpec:
    """Cumulative goal-difference style walk, reset at each season boundary."""
    k = len(FOOTBALL_CHANGE_POINTS)
    return SyntheticSpec(
        n=242,
        change_points=FOOTBALL_CHANGE_POINTS,
        means=(0.0,) * (k + 1),
        noise_std=1.5,
        seed=seed,
        reset_walk=True,
    )


PRESETS = {
    "paper-synthetic": regime_synthetic_spec,
    "football-like": football_like_spec,
}


def generate_synthetic(spec: SyntheticSpec) -> tuple[TimeSeries, ChangePointSet]:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    noise = rng.normal(0.0, 1.0, size=spec.n) * spec.noise_std
    z = np.empty(spec.n)
    for (lo, hi), m, a in zip(spec.segment_bounds, spec.means, spec.slopes):
        t = np.arange(hi - lo)
        seg_noise = np.cumsum(noise[lo:hi]) if spec.reset_walk else noise[lo:hi]
        z[lo:hi] = m + a * t + seg_noise
    return TimeSeries(z, name="synthetic"), ChangePointSet(spec.change_points)


@dataclass(frozen=True)
class CsvSchema:
    target: str = "y"
    covariates: tuple[str, ...] = ()
    timestamp: str | None = None
    delimiter: str = ","
    header: bool = True

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if not self.target:
            raise ValueError("target column must be named")
        names = [self.target, *self.covariates] + ([self.timestamp] if self.timestamp else [])
        if len(set(names)) != len(names):
            raise ValueError(f"column names must be distinct: {names}")


def _parse_float(text: str, row: int, column: str) -> float:
    s = text.strip()
    try:
        if "," in s:
            raise ValueError
        return float(s)
    except ValueError:
        raise CsvError(f"row {row}, column {column!r}: cannot parse {text!r} as a number", row, column) from None


def load_csv(path: str | os.PathLike, schema: CsvSchema = CsvSchema()) -> TimeSeries:
    """Read a series; rows are numbered from 1 for the first data row.

    Without a header, ``target``/``covariates``/``timestamp`` may be given as
    0-based column positions (as strings or ints).
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter=schema.delimiter))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows or (schema.header and len(rows) < 2):
        raise CsvError(f"{path}: no data rows")

    if schema.header:
        header = [h.strip() for h in rows[0]]
        body = rows[1:]

        def col(name):
            if name not in header:
                raise CsvError(f"{path}: missing column {name!r} (have {header})", column=name)
            return header.index(name)
    else:
        body = rows

        def col(name):
            return int(name)

    ti = col(schema.target)
    ci = [col(c) for c in schema.covariates]
    si = col(schema.timestamp) if schema.timestamp else None

    values = np.empty(len(body))
    cov = np.empty((len(body), len(ci))) if ci else None
    stamps = [] if si is not None else None
    for r, row in enumerate(body, 1):
        need = max([ti, *ci] + ([si] if si is not None else []))
        if len(row) <= need:
            raise CsvError(f"row {r}: expected at least {need + 1} fields, got {len(row)}", r)
        values[r - 1] = _parse_float(row[ti], r, str(schema.target))
        for j, c in enumerate(ci):
            cov[r - 1, j] = _parse_float(row[c], r, str(schema.covariates[j]))
        if stamps is not None:
            stamps.append(row[si].strip())
    if stamps:
        # numeric stamps order numerically; anything else (ISO dates) stays text
        try:
            stamps = [float(x) for x in stamps]
        except ValueError:
            pass
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return validate_series(TimeSeries(values, cov, stamps, name=name))


def write_csv(path: str | os.PathLike, ts: TimeSeries, schema: CsvSchema | None = None) -> None:
    """Write with shortest round-trip float formatting (``repr``)."""
    if schema is None:
        schema = CsvSchema(
            target="y",
            covariates=tuple(f"x{j + 1}" for j in range(ts.n_covariates)),
            timestamp="t",
        )
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=schema.delimiter, lineterminator="\n")
        cols = ([schema.timestamp] if schema.timestamp else []) + [schema.target, *schema.covariates]
        if schema.header:
            w.writerow(cols)
        for i in range(len(ts)):
            row = []
            if schema.timestamp:
                row.append(ts.timestamps[i] if ts.timestamps is not None else str(i))
            row.append(repr(float(ts.values[i])))
            if schema.covariates:
                row.extend(repr(float(v)) for v in ts.covariates[i])
            w.writerow(row)
