"""Mini-batch Adam training, evaluation and moving-average variants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..aggregate import BinFeatures, bins_to_array, moving_average, rmse
from ..errors import DivergenceDetected, EmptySplit, NonFiniteActivation
from .dataset import ForecastConfig, WindowedDataset, build_dataset
from .lstm import LstmParams, init_params, lstm_backward, lstm_forward, predict


class Adam:
    def __init__(self, params: LstmParams, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(a) for k, a in params.arrays().items()}
        self.v = {k: np.zeros_like(a) for k, a in params.arrays().items()}

    def step(self, params: LstmParams, grads: LstmParams) -> None:
        """Update ``params`` in place and bump its version."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * math.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        g = grads.arrays()
        for k, p in params.arrays().items():
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g[k]
            v *= b2
            v += (1 - b2) * (g[k] * g[k])
            p -= lr_t * m / (np.sqrt(v) + self.eps)
        params.version += 1


@dataclass(frozen=True)
class TrainingHistory:
    train_rmse: tuple[float, ...]  # per epoch, unscaled units

    def __len__(self):
        return len(self.train_rmse)


def _streams(seed: int):
    init_ss, shuffle_ss, drop_ss = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init_ss), np.random.default_rng(shuffle_ss), np.random.default_rng(drop_ss))


def train(dataset: WindowedDataset, config: ForecastConfig, progress: Callable[[int, float], None] | None = None):
    """Fit one LSTM regressor; returns ``(params, TrainingHistory)``.

    Loss is mean squared error on min-max scaled targets. Initialization,
    shuffling and dropout each draw from their own stream spawned from
    ``config.rng_seed``.
    """
    n = len(dataset)
    if n == 0:
        raise EmptySplit("training split is empty")
    dtype = np.dtype(config.dtype)
    init_rng, shuffle_rng, drop_rng = _streams(config.rng_seed)
    params = init_params(config.hidden_units, init_rng, dataset.inputs.shape[2], dtype)
    opt = Adam(params, lr=config.learning_rate)
    X = dataset.inputs.astype(dtype)
    y = dataset.scaled_targets.astype(dtype)
    H, p = config.hidden_units, config.dropout_rate
    keep = dtype.type(1.0 / (1.0 - p))
    history = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        sse = 0.0
        for s in range(0, n, config.batch_size):
            idx = order[s : s + config.batch_size]
            B = idx.size
            mask = None
            if p > 0:
                mask = (drop_rng.random((B, H)) >= p).astype(dtype) * keep
            try:
                pred, cache = lstm_forward(params, X[idx], mask)
            except NonFiniteActivation:
                raise DivergenceDetected(epoch) from None
            err = pred - y[idx]
            sse += float(np.dot(err, err))
            grads = lstm_backward(params, cache, (2.0 / B) * err)
            opt.step(params, grads)
        epoch_rmse = math.sqrt(sse / n) * dataset.target_scale
        if not math.isfinite(epoch_rmse):
            raise DivergenceDetected(epoch)
        history.append(epoch_rmse)
        if progress:
            progress(epoch, epoch_rmse)
    return params, TrainingHistory(tuple(history))


Predictor = LstmParams | Callable[[WindowedDataset], np.ndarray]


def predict_dataset(predictor: Predictor, dataset: WindowedDataset) -> np.ndarray:
    """Raw-unit predictions. A callable predictor maps a dataset to raw values."""
    if isinstance(predictor, LstmParams):
        return dataset.unscale_targets(predict(predictor, dataset.inputs))
    return np.asarray(predictor(dataset), dtype=np.float64)


@dataclass(frozen=True)
class Evaluation:
    train_rmse: float
    test_rmse: float
    series_std: float
    relative_rmse: float
    test_std: float
    target: str = ""
    granularity: str = ""
    smoothing_window: int = 1

    def as_row(self) -> dict:
        return {
            "target": self.target,
            "granularity": self.granularity,
            "smoothing_window": self.smoothing_window,
            "train_rmse": self.train_rmse,
            "test_rmse": self.test_rmse,
            "series_std": self.series_std,
            "relative_rmse": self.relative_rmse,
            "test_std": self.test_std,
        }


def _ratio(a, b):
    if b > 0:
        return a / b
    return 0.0 if a == 0 else math.inf


def evaluate_predictions(
    train_pred, train: WindowedDataset, test_pred, test: WindowedDataset
) -> Evaluation:
    if len(train) == 0 or len(test) == 0:
        raise EmptySplit("evaluation needs non-empty train and test splits")
    test_rmse = rmse(test_pred, test.targets)
    return Evaluation(
        train_rmse=rmse(train_pred, train.targets),
        test_rmse=test_rmse,
        series_std=train.series_std,
        relative_rmse=_ratio(test_rmse, train.series_std),
        test_std=float(np.std(test.targets)),
        target=train.target.value,
    )


def evaluate(predictor: Predictor, train: WindowedDataset, test: WindowedDataset) -> Evaluation:
    """RMSE in original units; ``relative_rmse`` divides by the full-series σ."""
    if len(train) == 0 or len(test) == 0:
        raise EmptySplit("evaluation needs non-empty train and test splits")
    return evaluate_predictions(predict_dataset(predictor, train), train, predict_dataset(predictor, test), test)


@dataclass(frozen=True)
class ForecastRun:
    config: ForecastConfig
    params: LstmParams
    history: TrainingHistory
    train: WindowedDataset
    test: WindowedDataset
    train_pred: np.ndarray
    test_pred: np.ndarray
    evaluation: Evaluation
    raw_test_rmse: float  # against the unsmoothed target
    raw_series_std: float
    smoothing_window: int = 1
    raw_test_targets: np.ndarray = field(default=None, repr=False)


def _granularity_of(bins) -> str:
    if isinstance(bins, np.ndarray) or not len(bins):
        return ""
    return bins[0].granularity.value


def fit_and_evaluate(bins: Sequence[BinFeatures] | np.ndarray, config: ForecastConfig, smoothing_window: int = 1,
                     progress=None) -> ForecastRun:
    """Build, train and evaluate one model, optionally on a smoothed target.

    With smoothing, the target column is replaced by its trailing moving
    average while inputs stay raw, and the input window is widened to at
    least the smoothing window so every averaged bin is visible.
    """
    feats = bins if isinstance(bins, np.ndarray) else bins_to_array(bins)
    raw = feats[:, config.target.column]
    target_series = None
    cfg = config
    if smoothing_window > 1:
        target_series = moving_average(raw, smoothing_window)
        cfg = replace(config, window_length=max(config.window_length, smoothing_window))
    train_ds, test_ds = build_dataset(bins, cfg, target_series)
    params, history = train(train_ds, cfg, progress)
    train_pred = predict_dataset(params, train_ds)
    test_pred = predict_dataset(params, test_ds)
    ev = evaluate_predictions(train_pred, train_ds, test_pred, test_ds)
    ev = replace(ev, granularity=_granularity_of(bins), smoothing_window=smoothing_window)
    raw_test = raw[test_ds.target_index]
    return ForecastRun(
        config=cfg,
        params=params,
        history=history,
        train=train_ds,
        test=test_ds,
        train_pred=train_pred,
        test_pred=test_pred,
        evaluation=ev,
        raw_test_rmse=rmse(test_pred, raw_test),
        raw_series_std=float(np.std(raw)),
        smoothing_window=smoothing_window,
        raw_test_targets=raw_test,
    )


def forecast_smoothed(bins, config: ForecastConfig, window: int, progress=None) -> ForecastRun:
    return fit_and_evaluate(bins, config, smoothing_window=window, progress=progress)


EVALUATION_COLUMNS = (
    "target", "granularity", "smoothing_window", "train_rmse", "test_rmse", "series_std", "relative_rmse", "test_std",
)
