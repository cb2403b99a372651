"""Domain types shared across the package.

All time indices are 0-based. A change point ``c`` is the first index of the
new regime; a valid training window may end at ``c - 1`` or start at
``c + 1`` but never contain ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class SeriesValidationError(ValueError):
    """Raised when a :class:`TimeSeries` violates one or more invariants.

    ``errors`` holds one :class:`SeriesIssue` per violation.
    """

    def __init__(self, errors: list[SeriesIssue]):
        self.errors = errors
        super().__init__("; ".join(str(e) for e in errors))


@dataclass(frozen=True)
class SeriesIssue:
    kind: str  # "non_finite" | "covariate_rows" | "timestamps"
    message: str
    index: int | None = None

    def __str__(self) -> str:
        return self.message


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Target values ``z_t`` with optional aligned covariates ``x_t``.

    ``covariates`` is ``None`` for univariate data, never an empty matrix.
    Timestamps are carried as metadata and never used in computation.
    """

    values: np.ndarray
    covariates: np.ndarray | None = None
    timestamps: tuple | None = None
    name: str = "series"

    def __post_init__(self):
        values = _readonly(np.array(self.values, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "values", values)
        if self.covariates is not None:
            cov = np.array(self.covariates, dtype=np.float64)
            if cov.ndim == 1:
                cov = cov.reshape(-1, 1)
            if cov.shape[1] == 0:
                cov = None
            else:
                cov = _readonly(cov)
            object.__setattr__(self, "covariates", cov)
        if self.timestamps is not None:
            object.__setattr__(self, "timestamps", tuple(self.timestamps))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def n_covariates(self) -> int:
        return 0 if self.covariates is None else self.covariates.shape[1]

    def slice(self, start: int, stop: int) -> TimeSeries:
        """Contiguous sub-series ``[start, stop)`` with covariates in lockstep."""
        return TimeSeries(
            values=self.values[start:stop],
            covariates=None if self.covariates is None else self.covariates[start:stop],
            timestamps=None if self.timestamps is None else self.timestamps[start:stop],
            name=self.name,
        )

    def issues(self) -> list[SeriesIssue]:
        out = []
        bad = np.flatnonzero(~np.isfinite(self.values))
        for i in bad:
            out.append(SeriesIssue("non_finite", f"non-finite value {self.values[i]} at index {i}", int(i)))
        if self.covariates is not None:
            if self.covariates.shape[0] != len(self.values):
                out.append(
                    SeriesIssue(
                        "covariate_rows",
                        f"covariates have {self.covariates.shape[0]} rows, expected {len(self.values)}",
                    )
                )
            else:
                rows = np.flatnonzero(~np.isfinite(self.covariates).all(axis=1))
                for i in rows:
                    out.append(SeriesIssue("non_finite", f"non-finite covariate at row {i}", int(i)))
        if self.timestamps is not None:
            if len(self.timestamps) != len(self.values):
                out.append(
                    SeriesIssue(
                        "timestamps",
                        f"{len(self.timestamps)} timestamps for {len(self.values)} values",
                    )
                )
            for i in range(1, len(self.timestamps)):
                if not self.timestamps[i] > self.timestamps[i - 1]:
                    out.append(SeriesIssue("timestamps", f"timestamps not strictly increasing at index {i}", i))
                    break
        return out


def validate_series(ts: TimeSeries) -> TimeSeries:
    """Return ``ts`` unchanged if every invariant holds.

    Raises
    ------
    SeriesValidationError
        Carrying the full list of violations (NaN/inf positions, covariate
        row-count mismatch, non-monotone timestamps).
    """
    errors = ts.issues()
    if errors:
        raise SeriesValidationError(errors)
    return ts


@dataclass(frozen=True)
class ChangePointSet:
    """Strictly increasing 0-based change-point indices."""

    indices: tuple[int, ...] = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise ValueError(f"change points must be non-negative, got {idx}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"change points must be strictly increasing, got {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_unsorted(cls, indices: Iterable[int]) -> ChangePointSet:
        return cls(tuple(sorted(set(int(i) for i in indices))))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def check_within(self, n: int) -> None:
        if self.indices and self.indices[-1] >= n:
            raise ValueError(f"change point {self.indices[-1]} outside series of length {n}")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)


@dataclass(frozen=True)
class WindowSpec:
    """A training window ``[start, end]`` (inclusive) of fixed length."""

    start: int
    length: int

    @property
    def end(self) -> int:
        return self.start + self.length - 1

    @classmethod
    def checked(cls, start: int, length: int, n: int) -> WindowSpec:
        """Build a window, enforcing the sampling range ``0 <= start <= n - s - 1``."""
        if length < 1:
            raise ValueError(f"window length must be >= 1, got {length}")
        if start < 0 or start > n - length - 1:
            raise ValueError(f"start {start} outside [0, {n - length - 1}] for n={n}, s={length}")
        return cls(int(start), int(length))


@dataclass(frozen=True, eq=False)
class GaussianForecast:
    """Per-step Gaussian parameters along the mean path plus sampled traces."""

    mu: np.ndarray
    sigma: np.ndarray
    traces: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise ValueError("mu and sigma must have equal length")
        if not np.all(self.sigma > 0):
            raise ValueError("sigma must be strictly positive")
        if self.traces.size and self.traces.shape[1] != len(self.mu):
            raise ValueError("trace length must equal the horizon")

    @property
    def horizon(self) -> int:
        return len(self.mu)

    def quantiles(self, qs: Sequence[float]) -> np.ndarray:
        return np.quantile(self.traces, qs, axis=0)
