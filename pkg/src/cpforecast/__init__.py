"""Change-point-aware probabilistic time-series forecasting.

Training windows that straddle a known or detected change point are
rejected, so an autoregressive LSTM with a Gaussian output only ever learns
from stationary stretches of the series.
"""

from .changepoint import MosumConfig, MosumResult, detect_change_points, max_batch_size, mosum_statistic
from .core import ChangePointSet, GaussianForecast, TimeSeries, WindowSpec, validate_series
from .data import CsvSchema, SyntheticSpec, generate_synthetic, load_csv, regime_synthetic_spec
from .evaluation import ScenarioConfig, ScenarioReport, rmse, run_scenario, split_60_20_20
from .forecaster import TrainConfig, TrainReport, naive_forecast, predict, train
from .sampler import SamplerConfig, enumerate_valid_starts, is_valid, sample_valid_batch

__version__ = "0.1.0"

__all__ = [
    "ChangePointSet",
    "CsvSchema",
    "GaussianForecast",
    "MosumConfig",
    "MosumResult",
    "SamplerConfig",
    "ScenarioConfig",
    "ScenarioReport",
    "SyntheticSpec",
    "TimeSeries",
    "TrainConfig",
    "TrainReport",
    "WindowSpec",
    "detect_change_points",
    "enumerate_valid_starts",
    "generate_synthetic",
    "is_valid",
    "load_csv",
    "max_batch_size",
    "mosum_statistic",
    "naive_forecast",
    "regime_synthetic_spec",
    "predict",
    "rmse",
    "run_scenario",
    "sample_valid_batch",
    "split_60_20_20",
    "train",
    "validate_series",
]
