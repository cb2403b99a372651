import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from cpforecast.changepoint import max_batch_size
from cpforecast.core import ChangePointSet
from cpforecast.sampler import (
    BatchSizeError,
    InfeasibleWindowError,
    RetryExhaustedError,
    SamplerConfig,
    WindowSampler,
    enumerate_valid_starts,
    is_valid,
    make_rng,
    sample_valid_batch,
)


def brute_valid_starts(n, s, cps):
    return [i for i in range(0, n - s) if all(not (i <= c <= i + s - 1) for c in cps)]


@pytest.mark.parametrize(
    "start,s,cps,expected",
    [
        (0, 6, (6,), True),
        (3, 6, (6,), False),
        (7, 6, (6,), True),
        (1, 6, (6,), False),
        (6, 6, (6,), False),
    ],
)
def test_is_valid_boundaries(start, s, cps, expected):
    assert is_valid(start, s, cps) is expected


@pytest.mark.parametrize(
    "n,s,cps,expected",
    [
        (10, 6, (6,), [0]),
        (10, 6, (), [0, 1, 2, 3]),
        (12, 3, (5,), [0, 1, 2, 6, 7, 8]),
    ],
)
def test_enumerate_valid_starts(n, s, cps, expected):
    assert brute_valid_starts(n, s, cps) == expected
    assert enumerate_valid_starts(n, s, cps) == expected


@settings(max_examples=300, deadline=None)
@given(
    n=st.integers(2, 200),
    data=st.data(),
)
def test_enumerate_matches_brute_force(n, data):
    s = data.draw(st.integers(1, n - 1))
    cps = sorted(set(data.draw(st.lists(st.integers(0, n - 1), max_size=8))))
    assert enumerate_valid_starts(n, s, cps) == brute_valid_starts(n, s, cps)


def test_no_change_points_any_start():
    cfg = SamplerConfig(batch_size=10, series_length=100)
    rng = make_rng(0)
    starts = {sample_valid_batch(cfg, rng).start for _ in range(5000)}
    assert starts == set(range(90))


def test_forced_single_start():
    cfg = SamplerConfig(batch_size=6, series_length=10, change_points=ChangePointSet((6,)))
    rng = make_rng(1)
    for _ in range(50):
        w = sample_valid_batch(cfg, rng)
        assert (w.start, w.end) == (0, 5)


def test_uniform_over_valid_starts():
    cps = ChangePointSet((10, 20))
    cfg = SamplerConfig(batch_size=5, series_length=30, change_points=cps)
    valid = brute_valid_starts(30, 5, cps.indices)
    sampler = WindowSampler(cfg, make_rng(42))
    draws = np.array([sampler.draw().start for _ in range(10_000)])
    assert set(draws) <= set(valid)
    counts = np.array([(draws == v).sum() for v in valid])
    p = 1 / len(valid)
    sd = np.sqrt(10_000 * p * (1 - p))
    assert np.all(np.abs(counts - 10_000 * p) <= 3 * sd)
    assert stats.chisquare(counts).pvalue > 0.01


def test_infeasible_names_blocking_points():
    # s_max check disabled by using a single change point
    cfg = SamplerConfig(batch_size=5, series_length=7, change_points=ChangePointSet((3,)))
    assert enumerate_valid_starts(7, 5, (3,)) == []
    with pytest.raises(InfeasibleWindowError) as exc:
        sample_valid_batch(cfg, make_rng(0))
    assert exc.value.blocking == (3,)


def test_retry_exhaustion():
    # starts {0..5}; only 2 and 5 are valid, so one proposal fails 2/3 of the time
    cfg = SamplerConfig(batch_size=2, series_length=8, change_points=ChangePointSet((1, 4)), max_retries=1)
    assert enumerate_valid_starts(8, 2, (1, 4)) == [2, 5]
    failures = 0
    for seed in range(30):
        try:
            sample_valid_batch(cfg, make_rng(seed))
        except RetryExhaustedError as exc:
            assert exc.retries == 1
            failures += 1
    assert 0 < failures < 30


def test_batch_size_above_smax_rejected():
    with pytest.raises(BatchSizeError) as exc:
        SamplerConfig(batch_size=11, series_length=100, change_points=ChangePointSet((30, 50)))
    assert exc.value.s_max == 10


def test_batch_size_range():
    with pytest.raises(ValueError):
        SamplerConfig(batch_size=100, series_length=100)


def test_soundness_completeness_random_configs():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(30, 300))
        k = int(rng.integers(0, 6))
        cps = ChangePointSet.from_unsorted(rng.choice(n, size=k, replace=False)) if k else ChangePointSet()
        s_max = max_batch_size(cps) or n - 1
        s = int(rng.integers(1, min(s_max, n - 1) + 1))
        valid = enumerate_valid_starts(n, s, cps.indices)
        if not valid:
            continue
        sampler = WindowSampler(SamplerConfig(s, n, cps), make_rng(int(rng.integers(1 << 32))))
        draws = [sampler.draw() for _ in range(2000)]
        assert all(is_valid(w.start, s, cps.indices) for w in draws)
        if len(valid) <= 20:
            assert {w.start for w in draws} == set(valid)


def test_segments_learnable_under_smax():
    # every inter-change-point stretch at least s long contains a valid start
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(50, 400))
        cps = ChangePointSet.from_unsorted(rng.choice(np.arange(1, n - 1), size=int(rng.integers(2, 6)), replace=False))
        s = max_batch_size(cps)
        valid = set(enumerate_valid_starts(n, s, cps.indices))
        edges = [0, *cps.indices, n]
        for lo, hi in zip(edges[:-1], edges[1:]):
            # stretch strictly between change points, clipped to the sampling range
            first, last = (lo + 1 if lo in cps.indices else lo), min(hi - 1, n - 2)
            if last - first + 1 >= s:
                assert any(first <= v <= last - s + 1 for v in valid)


def test_same_seed_same_draws():
    cfg = SamplerConfig(batch_size=5, series_length=60, change_points=ChangePointSet((20, 40)))
    a = [sample_valid_batch(cfg, r).start for r in [make_rng(9)] for _ in range(100)]
    b = [sample_valid_batch(cfg, r).start for r in [make_rng(9)] for _ in range(100)]
    assert a == b
