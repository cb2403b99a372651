import numpy as np
import pytest

from cpforecast.core import TimeSeries
from cpforecast.data import (
    SYNTHETIC_CHANGE_POINTS,
    CsvError,
    CsvSchema,
    SyntheticSpec,
    football_like_spec,
    generate_synthetic,
    load_csv,
    regime_synthetic_spec,
    write_csv,
)


def test_preset_shape_and_truth():
    spec = regime_synthetic_spec()
    ts, cps = generate_synthetic(spec)
    assert len(ts) == 3000
    assert cps.indices == SYNTHETIC_CHANGE_POINTS
    jumps = np.abs(np.diff(spec.means))
    assert np.all(jumps >= 3 * spec.noise_std)


def test_preset_segment_means():
    spec = regime_synthetic_spec()
    ts, _ = generate_synthetic(spec)
    for (lo, hi), m in zip(spec.segment_bounds, spec.means):
        assert abs(ts.values[lo:hi].mean() - m) <= 4 * spec.noise_std / np.sqrt(hi - lo)


def test_noise_free_is_piecewise_constant():
    spec = SyntheticSpec(n=20, change_points=(5, 12), means=(1.0, -2.0, 4.0), noise_std=0.0)
    ts, _ = generate_synthetic(spec)
    np.testing.assert_array_equal(ts.values, [1.0] * 5 + [-2.0] * 7 + [4.0] * 8)


def test_slopes():
    spec = SyntheticSpec(n=10, change_points=(4,), means=(0.0, 10.0), slopes=(1.0, -2.0), noise_std=0.0)
    ts, _ = generate_synthetic(spec)
    np.testing.assert_array_equal(ts.values, [0, 1, 2, 3, 10, 8, 6, 4, 2, 0])


def test_same_seed_same_series():
    a, _ = generate_synthetic(regime_synthetic_spec(seed=3))
    b, _ = generate_synthetic(regime_synthetic_spec(seed=3))
    np.testing.assert_array_equal(a.values, b.values)


def test_football_like_resets():
    spec = football_like_spec()
    ts, cps = generate_synthetic(spec)
    assert cps.indices == (31, 65, 99, 133, 157, 174, 191, 208)
    assert len(ts) == spec.n


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n=10, change_points=(4,), means=(0.0,)),  # wrong segment count
        dict(n=10, change_points=(9,), means=(0.0, 1.0)),  # not strictly inside
        dict(n=10, change_points=(0,), means=(0.0, 1.0)),
    ],
)
def test_invalid_spec(kwargs):
    with pytest.raises(ValueError):
        SyntheticSpec(**kwargs)


def test_load_minimal(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("t,y\n0,1.5\n1,2.5\n2,3.5\n")
    ts = load_csv(p, CsvSchema(target="y"))
    np.testing.assert_array_equal(ts.values, [1.5, 2.5, 3.5])
    assert ts.covariates is None


def test_load_covariates_follow_schema_order(tmp_path):
    names = [f"f{i}" for i in range(1, 11)]
    rows = ["t,y," + ",".join(names)]
    for r in range(4):
        rows.append(f"{r},{r * 0.5}," + ",".join(str(r * 100 + j) for j in range(1, 11)))
    p = tmp_path / "b.csv"
    p.write_text("\n".join(rows) + "\n")
    ts = load_csv(p, CsvSchema(target="y", covariates=tuple(names)))
    assert ts.covariates.shape == (4, 10)
    np.testing.assert_array_equal(ts.covariates[2], [201 + j for j in range(10)])
    rev = load_csv(p, CsvSchema(target="y", covariates=tuple(reversed(names))))
    np.testing.assert_array_equal(rev.covariates[:, 0], ts.covariates[:, -1])


def test_bad_cell_names_row(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("t,y\n0,1\n1,abc\n2,3\n")
    with pytest.raises(CsvError) as exc:
        load_csv(p)
    assert exc.value.row == 2
    assert "row 2" in str(exc.value)


def test_decimal_comma_rejected(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("t;y\n0;1,5\n")
    with pytest.raises(CsvError):
        load_csv(p, CsvSchema(delimiter=";"))


def test_missing_column_and_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("t,z\n0,1\n")
    with pytest.raises(CsvError, match="missing column"):
        load_csv(p)
    q = tmp_path / "f.csv"
    q.write_text("")
    with pytest.raises(CsvError):
        load_csv(q)


def test_headerless_positions(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("0,1.0,7\n1,2.0,8\n")
    ts = load_csv(p, CsvSchema(target="1", covariates=("2",), header=False))
    np.testing.assert_array_equal(ts.values, [1.0, 2.0])
    np.testing.assert_array_equal(ts.covariates[:, 0], [7, 8])


def test_write_load_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    vals = rng.normal(size=200) * 10.0 ** rng.integers(-12, 12, size=200)
    cov = rng.normal(size=(200, 3))
    ts = TimeSeries(vals, covariates=cov)
    p = tmp_path / "rt.csv"
    write_csv(p, ts)
    back = load_csv(p, CsvSchema(target="y", covariates=("x1", "x2", "x3"), timestamp="t"))
    np.testing.assert_array_equal(back.values, vals)
    np.testing.assert_array_equal(back.covariates, cov)
