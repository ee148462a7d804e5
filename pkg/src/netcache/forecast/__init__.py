"""LSTM forecasting over binned telemetry."""

from .benchmarks import BENCHMARKS, sine_benchmark, spiky_benchmark, telemetry_benchmark
from .dataset import (
    ForecastConfig,
    MinMaxScaler,
    Target,
    WindowedDataset,
    build_dataset,
    forecast_config_from_config,
    forecast_config_to_config,
)
from .lstm import LstmCache, LstmParams, init_params, lstm_backward, lstm_forward, predict
from .train import (
    EVALUATION_COLUMNS,
    Adam,
    Evaluation,
    ForecastRun,
    TrainingHistory,
    evaluate,
    evaluate_predictions,
    fit_and_evaluate,
    forecast_smoothed,
    train,
)
