"""Time-series rollups of resolved traces, plus the error statistics used to
score forecasts.

Each bin carries the eight model features in a fixed order (see
``FEATURES``). Two kinds of throughput are reported per bin:

* aggregate throughput: total bytes moved in the bin divided by the bin
  duration (a traffic rate), and
* average throughput: mean over individual transfers of size / duration.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptySequences,
    EmptyTrace,
    LengthMismatch,
    MalformedLine,
    NonPositiveDuration,
    TooFewPoints,
    UndefinedRate,
    UnknownOutcomePresent,
    ZeroWindow,
)
from .trace import AccessRecord, Outcome, Trace, format_ts, from_millis, parse_ts, to_millis


class Granularity(enum.Enum):
    HOURLY = "hourly"
    DAILY = "daily"

    @property
    def seconds(self) -> int:
        return 3600 if self is Granularity.HOURLY else 86400

    @classmethod
    def coerce(cls, value) -> "Granularity":
        return value if isinstance(value, cls) else cls(str(value).lower())


FEATURES = (
    "miss_count",
    "miss_bytes",
    "hit_count",
    "hit_bytes",
    "agg_miss_throughput",
    "agg_hit_throughput",
    "avg_miss_throughput",
    "avg_hit_throughput",
)

BINS_CSV_HEADER = (
    "bin_start",
    "granularity",
    "miss_count",
    "miss_bytes",
    "hit_count",
    "hit_bytes",
    "agg_miss_tput",
    "agg_hit_tput",
    "avg_miss_tput",
    "avg_hit_tput",
)


@dataclass(frozen=True, slots=True)
class BinFeatures:
    bin_start: datetime
    granularity: Granularity
    miss_count: int = 0
    miss_bytes: int = 0
    hit_count: int = 0
    hit_bytes: int = 0
    agg_miss_throughput: float = 0.0
    agg_hit_throughput: float = 0.0
    avg_miss_throughput: float = 0.0
    avg_hit_throughput: float = 0.0

    def as_row(self) -> tuple:
        return tuple(getattr(self, f) for f in FEATURES)


@dataclass(frozen=True)
class SummaryStats:
    total_hits: int
    total_misses: int
    hit_bytes: int
    miss_bytes: int

    @property
    def total_accesses(self) -> int:
        return self.total_hits + self.total_misses

    @property
    def file_hit_rate(self) -> float:
        if self.total_accesses == 0:
            raise UndefinedRate("file hit rate undefined for zero accesses")
        return self.total_hits / self.total_accesses

    @property
    def byte_hit_rate(self) -> float:
        total = self.hit_bytes + self.miss_bytes
        if total == 0:
            raise UndefinedRate("byte hit rate undefined for zero bytes")
        return self.hit_bytes / total

    def as_dict(self) -> dict:
        d = {
            "total_accesses": self.total_accesses,
            "total_hits": self.total_hits,
            "total_misses": self.total_misses,
            "hit_bytes": self.hit_bytes,
            "miss_bytes": self.miss_bytes,
        }
        if self.total_accesses:
            d["file_hit_rate"] = self.file_hit_rate
            d["byte_hit_rate"] = self.byte_hit_rate
        return d


def per_transfer_throughput(size_bytes: int, transfer_seconds: float) -> float:
    """Bytes per second achieved by one transfer."""
    if not transfer_seconds > 0:
        raise NonPositiveDuration(f"transfer_seconds must be > 0, got {transfer_seconds}")
    return size_bytes / transfer_seconds


def summarize_records(records: Iterable[AccessRecord]) -> SummaryStats:
    """Hit/miss tallies; zero totals allowed (rates then raise UndefinedRate)."""
    hits = misses = hb = mb = 0
    for i, r in enumerate(records):
        if r.outcome is Outcome.HIT:
            hits += 1
            hb += r.size_bytes
        elif r.outcome is Outcome.MISS:
            misses += 1
            mb += r.size_bytes
        else:
            raise UnknownOutcomePresent(i)
    return SummaryStats(hits, misses, hb, mb)


def summarize(trace: Trace | Sequence[AccessRecord]) -> SummaryStats:
    if len(trace) == 0:
        raise EmptyTrace()
    return summarize_records(trace)


def bin_trace(trace: Trace | Sequence[AccessRecord], granularity: Granularity | str) -> list[BinFeatures]:
    """Roll records up into contiguous, UTC-aligned bins.

    Bins run from the bin holding the earliest record to the bin holding the
    latest one; interior bins with no records are emitted as zero rows.
    """
    granularity = Granularity.coerce(granularity)
    records = trace.records if isinstance(trace, Trace) else trace
    n = len(records)
    if n == 0:
        raise EmptyTrace()
    ms = np.empty(n, dtype=np.int64)
    size = np.empty(n, dtype=np.int64)
    hit = np.empty(n, dtype=bool)
    secs = np.empty(n, dtype=np.float64)
    for i, r in enumerate(records):
        if r.outcome is Outcome.UNKNOWN:
            raise UnknownOutcomePresent(i)
        ms[i] = to_millis(r.ts)
        size[i] = r.size_bytes
        hit[i] = r.outcome is Outcome.HIT
        secs[i] = r.transfer_seconds
    if np.any(secs <= 0):
        raise NonPositiveDuration("transfer_seconds must be > 0")
    dur_ms = granularity.seconds * 1000
    idx = ms // dur_ms
    first = int(idx.min())
    k = idx - first
    nbins = int(k.max()) + 1
    tput = size / secs
    cols = {}
    for name, mask in (("miss", ~hit), ("hit", hit)):
        kk = k[mask]
        count = np.bincount(kk, minlength=nbins)
        nbytes = np.zeros(nbins, dtype=np.int64)
        np.add.at(nbytes, kk, size[mask])
        tsum = np.bincount(kk, weights=tput[mask], minlength=nbins)
        avg = np.divide(tsum, count, out=np.zeros(nbins), where=count > 0)
        cols[name] = (count, nbytes, avg)
    dur = float(granularity.seconds)
    out = []
    for j in range(nbins):
        mc, mb, ma = (c[j] for c in cols["miss"])
        hc, hb, ha = (c[j] for c in cols["hit"])
        out.append(
            BinFeatures(
                bin_start=from_millis((first + j) * dur_ms),
                granularity=granularity,
                miss_count=int(mc),
                miss_bytes=int(mb),
                hit_count=int(hc),
                hit_bytes=int(hb),
                agg_miss_throughput=int(mb) / dur,
                agg_hit_throughput=int(hb) / dur,
                avg_miss_throughput=float(ma),
                avg_hit_throughput=float(ha),
            )
        )
    return out


def _weighted(a_avg, a_n, b_avg, b_n):
    n = a_n + b_n
    return 0.0 if n == 0 else (a_avg * a_n + b_avg * b_n) / n


def merge_bin(a: BinFeatures, b: BinFeatures) -> BinFeatures:
    """Combine partial rollups of the same bin (e.g. from trace shards)."""
    if a.bin_start != b.bin_start or a.granularity is not b.granularity:
        raise ValueError("can only merge bins with the same start and granularity")
    dur = float(a.granularity.seconds)
    mb = a.miss_bytes + b.miss_bytes
    hb = a.hit_bytes + b.hit_bytes
    return BinFeatures(
        bin_start=a.bin_start,
        granularity=a.granularity,
        miss_count=a.miss_count + b.miss_count,
        miss_bytes=mb,
        hit_count=a.hit_count + b.hit_count,
        hit_bytes=hb,
        agg_miss_throughput=mb / dur,
        agg_hit_throughput=hb / dur,
        avg_miss_throughput=_weighted(a.avg_miss_throughput, a.miss_count, b.avg_miss_throughput, b.miss_count),
        avg_hit_throughput=_weighted(a.avg_hit_throughput, a.hit_count, b.avg_hit_throughput, b.hit_count),
    )


def merge_bin_series(*series: Sequence[BinFeatures]) -> list[BinFeatures]:
    """Merge shard rollups into one contiguous, zero-filled series."""
    series = [s for s in series if s]
    if not series:
        return []
    gran = series[0][0].granularity
    dur_ms = gran.seconds * 1000
    merged: dict[int, BinFeatures] = {}
    for s in series:
        for b in s:
            if b.granularity is not gran:
                raise ValueError("mixed granularities")
            key = to_millis(b.bin_start) // dur_ms
            merged[key] = merge_bin(merged[key], b) if key in merged else b
    lo, hi = min(merged), max(merged)
    return [merged.get(k) or BinFeatures(from_millis(k * dur_ms), gran) for k in range(lo, hi + 1)]


def rollup(bins: Sequence[BinFeatures], granularity: Granularity | str) -> list[BinFeatures]:
    """Re-bin a finer series into a coarser granularity (e.g. hourly -> daily)."""
    granularity = Granularity.coerce(granularity)
    dur_ms = granularity.seconds * 1000
    coarse = [
        _regranulate(b, from_millis(to_millis(b.bin_start) // dur_ms * dur_ms), granularity) for b in bins
    ]
    return merge_bin_series(coarse)


def _regranulate(b: BinFeatures, start, gran) -> BinFeatures:
    dur = float(gran.seconds)
    return BinFeatures(
        start, gran, b.miss_count, b.miss_bytes, b.hit_count, b.hit_bytes,
        b.miss_bytes / dur, b.hit_bytes / dur, b.avg_miss_throughput, b.avg_hit_throughput,
    )


def bins_to_array(bins: Sequence[BinFeatures]) -> np.ndarray:
    """(n_bins, 8) float64 matrix in ``FEATURES`` column order."""
    return np.array([b.as_row() for b in bins], dtype=np.float64).reshape(len(bins), len(FEATURES))


# --- statistics ----------------------------------------------------------


def moving_average(series: Sequence[float], window: int) -> np.ndarray:
    """Trailing mean: ``out[i] = mean(series[max(0, i-window+1) : i+1])``.

    Outputs are clamped into the [min, max] of their own window so rounding
    can never push an average outside the values it summarizes.
    """
    if window < 1:
        raise ZeroWindow(f"window must be >= 1, got {window}")
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise EmptySequences("series must be a non-empty 1-D sequence")
    if window == 1:
        return x.copy()
    w = min(window, x.size)
    padded = np.concatenate([np.full(w - 1, np.nan), x])
    view = np.lib.stride_tricks.sliding_window_view(padded, w)
    out = np.empty_like(x)
    # warm-up rows hold NaN padding; full rows use the plain mean
    full = slice(w - 1, None)
    out[full] = view[full].mean(axis=1)
    for i in range(w - 1):
        out[i] = x[: i + 1].mean()
    lo = np.nanmin(view, axis=1)
    hi = np.nanmax(view, axis=1)
    return np.clip(out, lo, hi)


def rmse(predicted: Sequence[float], actual: Sequence[float]) -> float:
    p = np.asarray(predicted, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.size != a.size:
        raise LengthMismatch(f"{p.size} predictions vs {a.size} actuals")
    if p.size == 0:
        raise EmptySequences("rmse of empty sequences")
    return float(np.sqrt(np.mean((p - a) ** 2)))


def std_dev(series: Sequence[float]) -> float:
    """Population standard deviation (divisor N)."""
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.size < 2:
        raise TooFewPoints("std_dev needs at least 2 points")
    return float(np.std(x))


# --- CSV -----------------------------------------------------------------


def write_bins_csv(bins: Iterable[BinFeatures], out=None) -> bytes | None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BINS_CSV_HEADER)
    for b in bins:
        w.writerow(
            [
                format_ts(b.bin_start),
                b.granularity.value,
                b.miss_count,
                b.miss_bytes,
                b.hit_count,
                b.hit_bytes,
                repr(float(b.agg_miss_throughput)),
                repr(float(b.agg_hit_throughput)),
                repr(float(b.avg_miss_throughput)),
                repr(float(b.avg_hit_throughput)),
            ]
        )
    data = buf.getvalue().encode("utf-8")
    if out is None:
        return data
    out.write(data)
    return None


def read_bins_csv(data) -> list[BinFeatures]:
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    text = data if isinstance(data, str) else data.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != BINS_CSV_HEADER:
        raise MalformedLine(1, "expected bins CSV header " + ",".join(BINS_CSV_HEADER))
    out = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != len(BINS_CSV_HEADER):
            raise MalformedLine(lineno, f"expected {len(BINS_CSV_HEADER)} columns")
        try:
            out.append(
                BinFeatures(
                    parse_ts(row[0]),
                    Granularity.coerce(row[1]),
                    *(int(v) for v in row[2:6]),
                    *(float(v) for v in row[6:10]),
                )
            )
        except ValueError as e:
            raise MalformedLine(lineno, str(e)) from None
    return out
