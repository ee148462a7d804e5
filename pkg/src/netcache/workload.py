"""Seeded synthetic request streams with a small/hot and a large/cold file
class, plus long campaign episodes of heavy large-file traffic.

Arrivals are Poisson per hour and per class. Each request picks a file by
Zipf rank within its class population; during a campaign a fraction of
requests instead target brand-new files. A file's size is drawn once
(lognormal) and never changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Callable, Sequence

import numpy as np

from .aggregate import SummaryStats, summarize_records
from .config import Fields
from .errors import ConfigError, InvalidSpec
from .simulate import FederationSpec, simulate
from .simulate.federation import SIZE_SCALE
from .trace import AccessRecord, Trace, format_ts, from_millis, parse_ts, to_millis

HOUR_MS = 3_600_000


@dataclass(frozen=True)
class FileClassSpec:
    class_label: str
    population: int
    size_lognorm_mu: float
    size_lognorm_sigma: float
    zipf_exponent: float
    request_rate_per_hour: float

    @property
    def mean_size(self) -> float:
        return math.exp(self.size_lognorm_mu + self.size_lognorm_sigma**2 / 2)


@dataclass(frozen=True)
class CampaignSpec:
    start: datetime
    end: datetime
    class_label: str
    rate_multiplier: float = 1.0
    fresh_fraction: float = 0.0


@dataclass(frozen=True)
class WorkloadSpec:
    classes: tuple[FileClassSpec, ...]
    campaigns: tuple[CampaignSpec, ...] = ()
    horizon_start: datetime = datetime(2021, 7, 1, tzinfo=timezone.utc)
    horizon_end: datetime = datetime(2022, 7, 1, tzinfo=timezone.utc)
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "campaigns", tuple(self.campaigns))

    def problems(self) -> list[str]:
        out = []
        if not self.horizon_start < self.horizon_end:
            out.append("horizon: start must be before end")
        labels = [c.class_label for c in self.classes]
        if len(set(labels)) != len(labels):
            out.append("classes: duplicate class_label")
        for i, c in enumerate(self.classes):
            where = f"classes[{i}]"
            if not c.class_label:
                out.append(f"{where}.class_label: must be non-empty")
            if not isinstance(c.population, int) or c.population < 1:
                out.append(f"{where}.population: must be a positive integer")
            if not c.size_lognorm_sigma >= 0:
                out.append(f"{where}.size_lognorm_sigma: must be >= 0")
            if not c.zipf_exponent >= 0:
                out.append(f"{where}.zipf_exponent: must be >= 0")
            if not c.request_rate_per_hour >= 0:
                out.append(f"{where}.request_rate_per_hour: must be >= 0")
            if not math.isfinite(c.size_lognorm_mu):
                out.append(f"{where}.size_lognorm_mu: must be finite")
        for i, c in enumerate(self.campaigns):
            where = f"campaigns[{i}]"
            if not c.start < c.end:
                out.append(f"{where}: start must be before end")
            if c.class_label not in labels:
                out.append(f"{where}.class_label: unknown class {c.class_label!r}")
            if not c.rate_multiplier >= 1:
                out.append(f"{where}.rate_multiplier: must be >= 1")
            if not 0 <= c.fresh_fraction <= 1:
                out.append(f"{where}.fresh_fraction: must be in [0, 1]")
        return out

    def validate(self) -> "WorkloadSpec":
        bad = self.problems()
        if bad:
            raise InvalidSpec(bad)
        return self

    def class_spec(self, label: str) -> FileClassSpec:
        for c in self.classes:
            if c.class_label == label:
                return c
        raise KeyError(label)

    def hour_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Hour-start offsets (ms) and the covered fraction of each hour."""
        start = to_millis(self.horizon_start)
        total = to_millis(self.horizon_end) - start
        n = -(-total // HOUR_MS)
        starts = np.arange(n, dtype=np.int64) * HOUR_MS
        frac = np.minimum(HOUR_MS, total - starts) / HOUR_MS
        return starts, frac

    def hourly_profile(self, label: str) -> tuple[np.ndarray, np.ndarray]:
        """Per-hour rate multiplier and fresh fraction for one class.

        Overlapping campaigns multiply their rates; the largest fresh
        fraction among active campaigns applies.
        """
        starts, _ = self.hour_grid()
        t0 = to_millis(self.horizon_start)
        mult = np.ones(starts.size)
        fresh = np.zeros(starts.size)
        for c in self.campaigns:
            if c.class_label != label:
                continue
            active = (starts + t0 >= to_millis(c.start)) & (starts + t0 < to_millis(c.end))
            mult[active] *= c.rate_multiplier
            fresh[active] = np.maximum(fresh[active], c.fresh_fraction)
        return mult, fresh

    def expected_requests(self) -> float:
        _, frac = self.hour_grid()
        total = 0.0
        for c in self.classes:
            mult, _ = self.hourly_profile(c.class_label)
            total += float(np.sum(c.request_rate_per_hour * mult * frac))
        return total

    @property
    def horizon_days(self) -> float:
        return (self.horizon_end - self.horizon_start) / timedelta(days=1)


def zipf_pmf(population: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, population + 1, dtype=np.float64)
    w = ranks**-exponent
    return w / w.sum()


def _lognormal_sizes(rng, mu, sigma, n) -> np.ndarray:
    return np.maximum(1, np.ceil(rng.lognormal(mu, sigma, n))).astype(np.int64)


def generate(spec: WorkloadSpec) -> Trace:
    """Draw a time-ordered request trace (all outcomes unknown)."""
    spec.validate()
    starts, frac = spec.hour_grid()
    t0 = to_millis(spec.horizon_start)
    children = np.random.SeedSequence(spec.rng_seed).spawn(len(spec.classes))
    times, cls_idx, seqs, ids, sizes = [], [], [], [], []
    for ci, (c, ss) in enumerate(zip(spec.classes, children)):
        rng = np.random.default_rng(ss)
        pop_sizes = _lognormal_sizes(rng, c.size_lognorm_mu, c.size_lognorm_sigma, c.population)
        mult, fresh_frac = spec.hourly_profile(c.class_label)
        counts = rng.poisson(c.request_rate_per_hour * mult * frac)
        n = int(counts.sum())
        hour = np.repeat(np.arange(starts.size), counts)
        t = t0 + starts[hour] + np.floor(rng.random(n) * frac[hour] * HOUR_MS).astype(np.int64)
        cdf = np.cumsum(zipf_pmf(c.population, c.zipf_exponent))
        rank = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), c.population - 1)
        is_fresh = rng.random(n) < fresh_frac[hour]
        fresh_sizes = _lognormal_sizes(rng, c.size_lognorm_mu, c.size_lognorm_sigma, n)
        label = c.class_label
        ids.extend(
            f"{label}-fresh-{i}" if is_fresh[i] else f"{label}-{rank[i]}" for i in range(n)
        )
        sizes.append(np.where(is_fresh, fresh_sizes, pop_sizes[rank]))
        times.append(t)
        cls_idx.append(np.full(n, ci))
        seqs.append(np.arange(n))
    if not times:
        return Trace((), source=f"workload(seed={spec.rng_seed})")
    t = np.concatenate(times)
    ci = np.concatenate(cls_idx)
    order = np.lexsort((np.concatenate(seqs), ci, t))
    size = np.concatenate(sizes)
    labels = [c.class_label for c in spec.classes]
    records = tuple(
        AccessRecord(from_millis(t[j]), ids[j], labels[ci[j]], int(size[j])) for j in order.tolist()
    )
    return Trace(records, source=f"workload(seed={spec.rng_seed})")


# --- default regional workload -------------------------------------------

SOCAL_DAILY_ACCESSES = 23_808
SOCAL_TOTAL_ACCESSES = 8_713_894
SOCAL_TARGETS = SummaryStats(
    total_hits=5_891_880,
    total_misses=2_822_014,
    hit_bytes=round(4_499.44e12),
    miss_bytes=round(8_210.78e12),
)

# Request mix outside campaigns: 90% small-format, 10% large-format.
_BASE_RATE_PER_HOUR = 725.0
_SMALL_SHARE = 0.9
_CAMPAIGN_MULTIPLIER = 10.0
_SMALL_MEAN_BYTES = 30e6
_SMALL_SIGMA = 1.0
_LARGE_MEAN_BYTES = 4e9
_LARGE_SIGMA = 0.5

# Reuse knobs fitted by `calibrate` at scale 1e-3 against the default
# federation (populations expressed at scale 1).
SOCAL_CALIBRATED = {
    "S_population": 1_484_000,
    "S_zipf": 1.2,
    "L_population": 552_000,
    "L_zipf": 0.8,
    "campaign_fresh": 0.5,
}


def _mu_for_mean(mean: float, sigma: float) -> float:
    return math.log(mean) - sigma**2 / 2


def default_socal_workload(
    scale: float = 1.0,
    *,
    size_scale: float = SIZE_SCALE,
    rng_seed: int = 0,
    params: dict | None = None,
) -> WorkloadSpec:
    """Two-class regional workload over July 2021 - June 2022.

    Request rates and file populations both scale linearly with ``scale``
    (so reuse structure is preserved); file sizes scale with ``size_scale``.
    A five-month large-file campaign runs from October through February.
    """
    if not 0 < scale <= 1:
        raise InvalidSpec([f"scale must be in (0, 1], got {scale}"])
    p = dict(SOCAL_CALIBRATED)
    if params:
        p.update(params)
    rate = _BASE_RATE_PER_HOUR * scale
    small = FileClassSpec(
        "S",
        max(1, round(p["S_population"] * scale)),
        _mu_for_mean(_SMALL_MEAN_BYTES * size_scale, _SMALL_SIGMA),
        _SMALL_SIGMA,
        p["S_zipf"],
        rate * _SMALL_SHARE,
    )
    large = FileClassSpec(
        "L",
        max(1, round(p["L_population"] * scale)),
        _mu_for_mean(_LARGE_MEAN_BYTES * size_scale, _LARGE_SIGMA),
        _LARGE_SIGMA,
        p["L_zipf"],
        rate * (1 - _SMALL_SHARE),
    )
    campaign = CampaignSpec(
        datetime(2021, 10, 1, tzinfo=timezone.utc),
        datetime(2022, 3, 1, tzinfo=timezone.utc),
        "L",
        _CAMPAIGN_MULTIPLIER,
        p["campaign_fresh"],
    )
    return WorkloadSpec((small, large), (campaign,), rng_seed=rng_seed)


# --- calibration ---------------------------------------------------------


@dataclass
class CalibrationResult:
    spec: WorkloadSpec
    file_hit_rate: float
    byte_hit_rate: float
    loss: float
    evaluations: int
    budget_exhausted: bool
    history: list[tuple[dict, float, float, float]] = field(default_factory=list)


def evaluate_rates(spec: WorkloadSpec, federation: FederationSpec, warmup: timedelta = timedelta(0)) -> SummaryStats:
    """Generate, simulate and tally hit rates after an optional warm-up period."""
    report = simulate(generate(spec), federation)
    if warmup <= timedelta(0):
        return report.summary
    cutoff = spec.horizon_start + warmup
    return summarize_records(r for r in report.resolved if r.ts >= cutoff)


def _knobs(spec: WorkloadSpec) -> list[tuple[str, float, float, float, float]]:
    """(name, value, step, lo, hi); populations are searched in log space."""
    out = []
    for c in spec.classes:
        out.append((f"{c.class_label}.log_population", math.log(c.population), 0.5, 0.0, math.log(1e9)))
        out.append((f"{c.class_label}.zipf_exponent", c.zipf_exponent, 0.2, 0.0, 3.0))
    for i, c in enumerate(spec.campaigns):
        out.append((f"campaign{i}.fresh_fraction", c.fresh_fraction, 0.1, 0.0, 1.0))
    return out


def _apply(spec: WorkloadSpec, values: dict[str, float]) -> WorkloadSpec:
    classes = []
    for c in spec.classes:
        pop = max(1, int(round(math.exp(values[f"{c.class_label}.log_population"]))))
        classes.append(replace(c, population=pop, zipf_exponent=values[f"{c.class_label}.zipf_exponent"]))
    campaigns = [
        replace(c, fresh_fraction=values[f"campaign{i}.fresh_fraction"]) for i, c in enumerate(spec.campaigns)
    ]
    return replace(spec, classes=tuple(classes), campaigns=tuple(campaigns))


def calibrate(
    targets: SummaryStats,
    base: WorkloadSpec,
    federation: FederationSpec,
    budget: int = 200,
    *,
    tol: float = 2.5e-5,
    min_step: float = 0.01,
    warmup: timedelta = timedelta(0),
    progress: Callable[[int, float, float, float], None] | None = None,
) -> CalibrationResult:
    """Coordinate descent on reuse knobs to match file and byte hit rates.

    Searches per-class populations (log scale) and Zipf exponents plus each
    campaign's fresh fraction, minimizing the squared error of the two hit
    rates. Every evaluation uses ``base.rng_seed`` (common random numbers),
    so the search is deterministic. ``budget`` caps simulate evaluations;
    running out is reported through ``budget_exhausted``, not an exception.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    base.validate()
    tf, tb = targets.file_hit_rate, targets.byte_hit_rate
    knobs = _knobs(base)
    values = {k[0]: k[1] for k in knobs}
    steps = {k[0]: k[2] for k in knobs}
    bounds = {k[0]: (k[3], k[4]) for k in knobs}
    cache: dict[tuple, tuple[float, float, float]] = {}
    history = []

    def evaluate(vals) -> tuple[float, float, float]:
        key = tuple(round(vals[k], 12) for k in sorted(vals))
        if key not in cache:
            spec = base if vals == start_values else _apply(base, vals)
            stats = evaluate_rates(spec, federation, warmup)
            f, b = stats.file_hit_rate, stats.byte_hit_rate
            cache[key] = ((f - tf) ** 2 + (b - tb) ** 2, f, b)
            history.append((dict(vals), *cache[key]))
            if progress:
                progress(len(cache), *cache[key])
        return cache[key]

    start_values = dict(values)
    best_loss, best_f, best_b = evaluate(values)
    exhausted = False
    while best_loss > tol:
        improved = False
        for name in values:
            lo, hi = bounds[name]
            for direction in (1, -1):
                if len(cache) >= budget:
                    exhausted = True
                    break
                trial = dict(values)
                trial[name] = min(hi, max(lo, values[name] + direction * steps[name]))
                if trial[name] == values[name]:
                    continue
                loss, f, b = evaluate(trial)
                if loss < best_loss:
                    values, best_loss, best_f, best_b = trial, loss, f, b
                    improved = True
                    break
            if exhausted or best_loss <= tol:
                break
        if exhausted:
            break
        if not improved:
            for name in steps:
                steps[name] /= 2
            if all(s < min_step for s in steps.values()):
                break
    spec = base if values == start_values else _apply(base, values)
    return CalibrationResult(spec, best_f, best_b, best_loss, len(cache), exhausted, history)


# --- config ---------------------------------------------------------------


def workload_from_config(data: dict, seed: int | None = None) -> WorkloadSpec:
    """Parse a workload mapping; ``preset: socal`` expands the default model."""
    f = Fields(data, "workload")
    preset = f.raw("preset")
    if preset is not None:
        if preset != "socal":
            raise ConfigError(f"workload.preset: unknown preset {preset!r}")
        spec = default_socal_workload(
            f.num("scale", 1.0), size_scale=f.num("size_scale", SIZE_SCALE), rng_seed=f.int("rng_seed", 0)
        )
        f.finish()
    else:
        hz = Fields(f.raw("horizon", required=True), "workload.horizon")
        start, end = _ts(hz, "start"), _ts(hz, "end")
        hz.finish()
        classes = []
        for i, cd in enumerate(f.raw("classes", [], required=True) or []):
            cf = Fields(cd, f"workload.classes[{i}]")
            classes.append(
                FileClassSpec(
                    cf.str("class_label", required=True),
                    cf.int("population", required=True),
                    cf.num("size_lognorm_mu", required=True),
                    cf.num("size_lognorm_sigma", 0.0),
                    cf.num("zipf_exponent", 0.0),
                    cf.num("request_rate_per_hour", required=True),
                )
            )
            cf.finish()
        campaigns = []
        for i, cd in enumerate(f.raw("campaigns", []) or []):
            cf = Fields(cd, f"workload.campaigns[{i}]")
            campaigns.append(
                CampaignSpec(
                    _ts(cf, "start"),
                    _ts(cf, "end"),
                    cf.str("class_label", required=True),
                    cf.num("rate_multiplier", 1.0),
                    cf.num("fresh_fraction", 0.0),
                )
            )
            cf.finish()
        spec = WorkloadSpec(tuple(classes), tuple(campaigns), start, end, f.int("rng_seed", 0))
        f.finish()
    if seed is not None:
        spec = replace(spec, rng_seed=seed)
    try:
        return spec.validate()
    except InvalidSpec as e:
        raise ConfigError("invalid workload: " + "; ".join(e.problems)) from None


def _ts(fields: Fields, key: str) -> datetime:
    v = fields.raw(key, required=True)
    if isinstance(v, datetime):
        return v if v.tzinfo else v.replace(tzinfo=timezone.utc)
    try:
        return parse_ts(str(v))
    except ValueError as e:
        raise ConfigError(f"{fields.where}.{key}: {e}") from None


def workload_to_config(spec: WorkloadSpec) -> dict:
    return {
        "rng_seed": spec.rng_seed,
        "horizon": {"start": format_ts(spec.horizon_start), "end": format_ts(spec.horizon_end)},
        "classes": [
            {
                "class_label": c.class_label,
                "population": c.population,
                "size_lognorm_mu": c.size_lognorm_mu,
                "size_lognorm_sigma": c.size_lognorm_sigma,
                "zipf_exponent": c.zipf_exponent,
                "request_rate_per_hour": c.request_rate_per_hour,
            }
            for c in spec.classes
        ],
        "campaigns": [
            {
                "start": format_ts(c.start),
                "end": format_ts(c.end),
                "class_label": c.class_label,
                "rate_multiplier": c.rate_multiplier,
                "fresh_fraction": c.fresh_fraction,
            }
            for c in spec.campaigns
        ],
    }
