"""Regenerate golden_trace.jsonl and golden_bins_hourly.csv.

The trace comes from the seeded test generator; the bins are computed by the
brute-force group-by in tests/oracles.py and written with a plain csv writer,
so nothing in netcache's aggregation path is involved.

    python3 tests/fixtures/make_golden_bins.py
"""

import csv
import sys
from datetime import timedelta
from pathlib import Path

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE.parent))

from conftest import random_records  # noqa: E402
from oracles import EPOCH, groupby_bins  # noqa: E402

from netcache.trace import Trace, save_trace  # noqa: E402

COLUMNS = ("miss_count", "miss_bytes", "hit_count", "hit_bytes", "agg_miss_throughput", "agg_hit_throughput",
           "avg_miss_throughput", "avg_hit_throughput")
EMPTY = dict.fromkeys(COLUMNS[:4], 0) | dict.fromkeys(COLUMNS[4:], 0.0)


def main():
    records = random_records(60, seed=11, span_hours=30.0)
    save_trace(Trace(tuple(records)), HERE / "golden_trace.jsonl")
    bins = groupby_bins(records, 3600)
    with open(HERE / "golden_bins_hourly.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("bin_start", "granularity", *(c.replace("throughput", "tput") for c in COLUMNS)))
        for k in range(min(bins), max(bins) + 1):
            b = bins.get(k, EMPTY)
            start = EPOCH + timedelta(hours=k)
            w.writerow([start.strftime("%Y-%m-%dT%H:%M:%S.000Z"), "hourly",
                        *(b[c] for c in COLUMNS[:4]), *(repr(float(b[c])) for c in COLUMNS[4:])])


if __name__ == "__main__":
    main()
