import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cpforecast.core import (
    ChangePointSet,
    GaussianForecast,
    SeriesValidationError,
    TimeSeries,
    WindowSpec,
    validate_series,
)


def test_minimal_series_ok():
    ts = TimeSeries([1, 2, 3])
    assert validate_series(ts) is ts
    assert ts.covariates is None


def test_nan_reported_with_index():
    with pytest.raises(SeriesValidationError) as exc:
        validate_series(TimeSeries([1, np.nan, 3]))
    (err,) = exc.value.errors
    assert err.kind == "non_finite" and err.index == 1


def test_covariate_row_mismatch():
    with pytest.raises(SeriesValidationError) as exc:
        validate_series(TimeSeries(np.arange(5.0), covariates=np.zeros((4, 2))))
    assert [e.kind for e in exc.value.errors] == ["covariate_rows"]


def test_non_monotone_timestamps():
    with pytest.raises(SeriesValidationError) as exc:
        validate_series(TimeSeries([1.0, 2.0, 3.0], timestamps=[0, 2, 2]))
    assert exc.value.errors[0].kind == "timestamps"


def test_all_violations_listed():
    ts = TimeSeries([np.inf, 1.0, np.nan], covariates=np.zeros((2, 1)), timestamps=[3, 2, 1])
    kinds = sorted(e.kind for e in ts.issues())
    assert kinds == ["covariate_rows", "non_finite", "non_finite", "timestamps"]


def test_empty_covariate_matrix_means_none():
    assert TimeSeries([1.0, 2.0], covariates=np.zeros((2, 0))).covariates is None


def test_series_is_read_only():
    ts = TimeSeries([1.0, 2.0])
    with pytest.raises(ValueError):
        ts.values[0] = 5.0


def test_slice_keeps_covariates_in_lockstep():
    ts = TimeSeries(np.arange(10.0), covariates=np.arange(20.0).reshape(10, 2))
    sub = ts.slice(3, 6)
    np.testing.assert_array_equal(sub.values, [3, 4, 5])
    np.testing.assert_array_equal(sub.covariates[:, 0], [6, 8, 10])


@given(hnp.arrays(np.float64, st.integers(1, 50), elements=st.floats(-1e6, 1e6)))
def test_validation_idempotent(values):
    ts = validate_series(TimeSeries(values))
    assert validate_series(ts) is ts
    assert ts.issues() == []


def test_change_point_set_invariants():
    with pytest.raises(ValueError):
        ChangePointSet((5, 3))
    with pytest.raises(ValueError):
        ChangePointSet((3, 3))
    assert ChangePointSet.from_unsorted([5, 3, 5]).indices == (3, 5)
    with pytest.raises(ValueError):
        ChangePointSet((3, 10)).check_within(10)


def test_window_spec_range():
    w = WindowSpec.checked(3, 6, 10)
    assert (w.start, w.end) == (3, 8)
    with pytest.raises(ValueError):
        WindowSpec.checked(4, 6, 10)  # start > n - s - 1
    with pytest.raises(ValueError):
        WindowSpec.checked(-1, 6, 10)


def test_gaussian_forecast_requires_positive_sigma():
    with pytest.raises(ValueError):
        GaussianForecast(np.zeros(3), np.array([1.0, 0.0, 1.0]))
    fc = GaussianForecast(np.zeros(2), np.ones(2), np.zeros((4, 2)))
    assert fc.horizon == 2
