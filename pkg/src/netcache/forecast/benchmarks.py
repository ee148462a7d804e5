"""Seeded synthetic series for checking forecaster skill.

Each builder returns hourly BinFeatures so the series flow through the same
dataset code as real telemetry.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np

from ..aggregate import BinFeatures, Granularity
from ..simulate.federation import SIZE_SCALE
from ..simulate.throughput import ThroughputModelSpec

START = datetime(2021, 7, 1, tzinfo=timezone.utc)
HOUR = 3600.0


def _to_bins(cols: dict[str, np.ndarray], start: datetime = START) -> list[BinFeatures]:
    n = len(cols["miss_count"])
    out = []
    for k in range(n):
        out.append(
            BinFeatures(
                start + timedelta(hours=k),
                Granularity.HOURLY,
                int(cols["miss_count"][k]),
                int(cols["miss_bytes"][k]),
                int(cols["hit_count"][k]),
                int(cols["hit_bytes"][k]),
                float(cols["miss_bytes"][k]) / HOUR,
                float(cols["hit_bytes"][k]) / HOUR,
                float(cols["avg_miss_throughput"][k]),
                float(cols["avg_hit_throughput"][k]),
            )
        )
    return out


def _periodic(n: int, period: float) -> dict[str, np.ndarray]:
    ph = 2 * np.pi * np.arange(n) / period
    miss = np.rint(200 + 100 * np.sin(ph)).astype(np.int64)
    hit = np.rint(400 + 150 * np.cos(ph)).astype(np.int64)
    return {
        "miss_count": miss,
        "miss_bytes": miss * 1000,
        "hit_count": hit,
        "hit_bytes": hit * 30,
        "avg_miss_throughput": 500 + 250 * np.sin(ph + 0.7),
        "avg_hit_throughput": 800 + 100 * np.cos(ph),
    }


def sine_benchmark(n_bins: int = 2000, period: float = 24.0) -> list[BinFeatures]:
    """Noiseless daily-periodic series in every feature."""
    return _to_bins(_periodic(n_bins, period))


def spiky_benchmark(n_bins: int = 1500, period: float = 24.0, seed: int = 7,
                    spike_prob: float = 0.04, spike_scale: float = 300.0) -> list[BinFeatures]:
    """Sine plus sparse heavy-tailed (Pareto) spikes on average miss throughput.

    The spikes are unpredictable one step ahead, which is exactly what a
    moving-average target smooths away.
    """
    rng = np.random.default_rng(seed)
    cols = _periodic(n_bins, period)
    spikes = np.where(rng.random(n_bins) < spike_prob, spike_scale * (1.0 + rng.pareto(1.5, n_bins)), 0.0)
    cols["avg_miss_throughput"] = cols["avg_miss_throughput"] + spikes
    return _to_bins(cols)


def _campaign_level(hours: np.ndarray, start: datetime, begin: datetime, end: datetime, edge_hours=72.0):
    a = (begin - start).total_seconds() / HOUR
    b = (end - start).total_seconds() / HOUR
    rise = 1 / (1 + np.exp(-(hours - a) / (edge_hours / 6)))
    fall = 1 / (1 + np.exp((hours - b) / (edge_hours / 6)))
    return rise * fall


def telemetry_benchmark(
    n_bins: int = 8760,
    seed: int = 2021,
    *,
    size_scale: float = SIZE_SCALE,
    start: datetime = START,
) -> list[BinFeatures]:
    """Campaign-shaped hourly telemetry built from per-transfer draws.

    Two file classes: frequent small files with a high hit probability and
    rare large files whose request rate rises tenfold (and hit probability
    falls) during an October-to-March campaign. Rates follow daily and
    weekly cycles. Every transfer gets a lognormal size and a
    size-dependent throughput, and the bins are the exact per-hour sums and
    means of those draws.
    """
    rng = np.random.default_rng(seed)
    hours = np.arange(n_bins, dtype=np.float64)
    clock = (hours + start.hour) % 24
    weekday = ((hours + start.hour) // 24 + start.weekday()) % 7
    cycle = (1 + 0.3 * np.sin(2 * np.pi * (clock - 9) / 24)) * np.where(weekday >= 5, 0.8, 1.0)
    camp = _campaign_level(
        hours, start, datetime(2021, 10, 1, tzinfo=timezone.utc), datetime(2022, 3, 1, tzinfo=timezone.utc)
    )
    classes = {
        # rate/hour, mean bytes, size sigma, hit probability
        "S": (650 * cycle, 30e6, 1.0, np.full(n_bins, 0.85)),
        "L": (72 * cycle * (1 + 9 * camp), 4e9, 0.5, 0.5 - 0.3 * camp),
    }
    model = ThroughputModelSpec.scaled(size_scale)
    wan, lan, ramp, jitter = model.wan_max_bps, model.lan_max_bps, model.ramp_bytes, model.jitter_lognorm_sigma
    sums = {k: np.zeros(n_bins) for k in ("mc", "mb", "hc", "hb", "mt", "ht")}
    for rate, mean, sigma, p_hit in classes.values():
        counts = rng.poisson(rate)
        hit_n = rng.binomial(counts, p_hit)
        total = int(counts.sum())
        hour_of = np.repeat(np.arange(n_bins), counts)
        is_hit = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts) < np.repeat(hit_n, counts)
        mu = np.log(mean * size_scale) - sigma**2 / 2
        size = np.maximum(1.0, np.rint(rng.lognormal(mu, sigma, total)))
        r_max = np.where(is_hit, lan, wan)
        tput = r_max * size / (size + ramp) * np.exp(jitter * rng.standard_normal(total))
        for flag, c, b, t in ((is_hit, "hc", "hb", "ht"), (~is_hit, "mc", "mb", "mt")):
            sums[c] += np.bincount(hour_of[flag], minlength=n_bins)
            sums[b] += np.bincount(hour_of[flag], weights=size[flag], minlength=n_bins)
            sums[t] += np.bincount(hour_of[flag], weights=tput[flag], minlength=n_bins)
    mc, hc = sums["mc"], sums["hc"]
    cols = {
        "miss_count": mc.astype(np.int64),
        "miss_bytes": np.rint(sums["mb"]).astype(np.int64),
        "hit_count": hc.astype(np.int64),
        "hit_bytes": np.rint(sums["hb"]).astype(np.int64),
        "avg_miss_throughput": np.divide(sums["mt"], mc, out=np.zeros(n_bins), where=mc > 0),
        "avg_hit_throughput": np.divide(sums["ht"], hc, out=np.zeros(n_bins), where=hc > 0),
    }
    return _to_bins(cols, start)


BENCHMARKS = {"sine": sine_benchmark, "spiky": spiky_benchmark, "telemetry": telemetry_benchmark}
