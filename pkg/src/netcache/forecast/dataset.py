"""Windowed, min-max scaled datasets for one-step-ahead forecasting."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Sequence

import numpy as np

from ..aggregate import FEATURES, BinFeatures, Granularity, bins_to_array
from ..config import Fields
from ..errors import ConfigError, SeriesTooShort, ShapeMismatch


class Target(enum.Enum):
    MISS_COUNT = "miss_count"
    MISS_BYTES = "miss_bytes"
    AVG_MISS_THROUGHPUT = "avg_miss_throughput"
    HIT_COUNT = "hit_count"
    HIT_BYTES = "hit_bytes"
    AVG_HIT_THROUGHPUT = "avg_hit_throughput"

    @property
    def column(self) -> int:
        return FEATURES.index(self.value)

    @classmethod
    def coerce(cls, value) -> "Target":
        if isinstance(value, cls):
            return value
        text = str(value).strip()
        for t in cls:
            # accept "avg_miss_throughput", "AVG_MISS_THROUGHPUT" and "AvgMissThroughput"
            if text in (t.value, t.name) or text.lower() == t.value.replace("_", ""):
                return t
        raise ValueError(f"unknown target {value!r}")


DEFAULT_WINDOW = {Granularity.HOURLY: 24, Granularity.DAILY: 7}


@dataclass(frozen=True)
class ForecastConfig:
    hidden_units: int = 128
    cell_activation: str = "tanh"
    dropout_rate: float = 0.04
    epochs: int = 50
    window_length: int = 24
    train_fraction: float = 0.8
    learning_rate: float = 1e-3
    batch_size: int = 32
    rng_seed: int = 0
    target: Target = Target.AVG_MISS_THROUGHPUT
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "target", Target.coerce(self.target))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        for name in ("hidden_units", "epochs", "window_length", "batch_size"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                out.append(f"{name} must be a positive integer")
        if self.cell_activation != "tanh":
            out.append("cell_activation must be 'tanh'")
        if not 0.0 <= self.dropout_rate < 1.0:
            out.append("dropout_rate must lie in [0, 1)")
        if not 0.0 < self.train_fraction < 1.0:
            out.append("train_fraction must lie in (0, 1)")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            out.append("learning_rate must be positive")
        if self.dtype not in ("float32", "float64"):
            out.append("dtype must be float32 or float64")
        return out

    def with_target(self, target) -> "ForecastConfig":
        return replace(self, target=Target.coerce(target))

    @classmethod
    def for_granularity(cls, granularity, **kw) -> "ForecastConfig":
        kw.setdefault("window_length", DEFAULT_WINDOW[Granularity.coerce(granularity)])
        return cls(**kw)


def forecast_config_from_config(data: dict | None, seed: int | None = None) -> ForecastConfig:
    f = Fields(data or {}, "forecast")
    d = ForecastConfig()
    kw = dict(
        hidden_units=f.int("hidden_units", d.hidden_units),
        cell_activation=f.str("cell_activation", d.cell_activation),
        dropout_rate=f.num("dropout_rate", d.dropout_rate),
        epochs=f.int("epochs", d.epochs),
        window_length=f.int("window_length", d.window_length),
        train_fraction=f.num("train_fraction", d.train_fraction),
        learning_rate=f.num("learning_rate", d.learning_rate),
        batch_size=f.int("batch_size", d.batch_size),
        rng_seed=f.int("rng_seed", d.rng_seed),
        target=f.str("target", d.target.value),
        dtype=f.str("dtype", d.dtype),
    )
    f.finish()
    if seed is not None:
        kw["rng_seed"] = seed
    try:
        return ForecastConfig(**kw)
    except ValueError as e:
        raise ConfigError(f"forecast: {e}") from None


def forecast_config_to_config(cfg: ForecastConfig) -> dict:
    return {
        "hidden_units": cfg.hidden_units,
        "cell_activation": cfg.cell_activation,
        "dropout_rate": cfg.dropout_rate,
        "epochs": cfg.epochs,
        "window_length": cfg.window_length,
        "train_fraction": cfg.train_fraction,
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "rng_seed": cfg.rng_seed,
        "target": cfg.target.value,
        "dtype": cfg.dtype,
    }


@dataclass(frozen=True)
class MinMaxScaler:
    mins: np.ndarray
    ranges: np.ndarray

    @classmethod
    def fit(cls, rows: np.ndarray) -> "MinMaxScaler":
        rows = np.asarray(rows, dtype=np.float64)
        lo = rows.min(axis=0)
        return cls(lo, rows.max(axis=0) - lo)

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        safe = np.where(self.ranges > 0, self.ranges, 1.0)
        # range-0 columns map to 0 by convention
        return np.where(self.ranges > 0, (x - self.mins) / safe, 0.0)

    def inverse(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.ranges + self.mins


@dataclass(frozen=True)
class WindowedDataset:
    """Scaled input windows with their raw one-step-ahead targets.

    ``inputs[i]`` covers bins ``[i, i + window_length)`` of the source series
    (shifted by ``target_index[0] - window_length`` for the test split) and
    ``targets[i]`` is the raw target value at bin ``target_index[i]``.
    """

    inputs: np.ndarray  # (n, window_length, 8), scaled
    targets: np.ndarray  # (n,), raw units
    target_index: np.ndarray  # (n,) bin index of each target
    feature_mins: np.ndarray
    feature_ranges: np.ndarray
    target_min: float
    target_scale: float
    series_std: float
    target: Target = Target.AVG_MISS_THROUGHPUT
    bin_starts: tuple[datetime, ...] = field(default=(), repr=False)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def window_length(self) -> int:
        return self.inputs.shape[1]

    @property
    def scaler(self) -> MinMaxScaler:
        return MinMaxScaler(self.feature_mins, self.feature_ranges)

    @property
    def scaled_targets(self) -> np.ndarray:
        return (self.targets - self.target_min) / self.target_scale

    def unscale_targets(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.target_scale + self.target_min

    def raw_inputs(self) -> np.ndarray:
        return self.scaler.inverse(self.inputs)


def build_dataset(
    bins: Sequence[BinFeatures] | np.ndarray,
    config: ForecastConfig,
    target_series: Sequence[float] | None = None,
) -> tuple[WindowedDataset, WindowedDataset]:
    """Chronological (train, test) split of one-step-ahead windows.

    ``bins`` may be BinFeatures or an ``(n, 8)`` feature matrix.
    ``target_series`` replaces the configured target column (e.g. with a
    moving average) while inputs stay unsmoothed.
    """
    if isinstance(bins, np.ndarray):
        feats = np.asarray(bins, dtype=np.float64)
        starts: tuple = ()
    else:
        feats = bins_to_array(bins)
        starts = tuple(b.bin_start for b in bins)
    if feats.ndim != 2 or feats.shape[1] != len(FEATURES):
        raise ShapeMismatch(f"feature matrix must be (n, {len(FEATURES)}), got {feats.shape}")
    n = feats.shape[0]
    w = config.window_length
    if n < w + 2:
        raise SeriesTooShort(f"{n} bins is too short for window {w} (need at least {w + 2})")
    y = feats[:, config.target.column] if target_series is None else np.asarray(target_series, dtype=np.float64)
    if y.shape != (n,):
        raise ShapeMismatch(f"target series length {y.shape} does not match {n} bins")

    m = n - w
    n_train = min(max(int(math.floor(config.train_fraction * m)), 1), m - 1)
    # training inputs touch bins [0, n_train + w - 1)
    scaler = MinMaxScaler.fit(feats[: n_train + w - 1])
    scaled = scaler.transform(feats)
    windows = np.lib.stride_tricks.sliding_window_view(scaled, w, axis=0)[:m].transpose(0, 2, 1)
    t_lo = float(y[w : w + n_train].min())
    t_rng = float(y[w : w + n_train].max()) - t_lo
    # a constant training target keeps unit scale so errors stay visible
    t_scale = t_rng if t_rng > 0 else 1.0
    std = float(np.std(y))
    idx = np.arange(w, n)

    def part(sl):
        return WindowedDataset(
            inputs=np.ascontiguousarray(windows[sl]),
            targets=y[w:][sl].copy(),
            target_index=idx[sl],
            feature_mins=scaler.mins,
            feature_ranges=scaler.ranges,
            target_min=t_lo,
            target_scale=t_scale,
            series_std=std,
            target=config.target,
            bin_starts=starts,
        )

    return part(slice(0, n_train)), part(slice(n_train, m))
