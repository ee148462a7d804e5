import os
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from netcache.trace import AccessRecord, Outcome, Trace  # noqa: E402

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    max_examples=int(os.environ.get("HYPOTHESIS_MAX_EXAMPLES", "60")),
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("repo")

FIXTURES = Path(__file__).parent / "fixtures"
T0 = datetime(2021, 7, 1, tzinfo=timezone.utc)


def random_records(n, seed=0, *, resolved=True, span_hours=72.0, classes=("S", "L"), n_files=None):
    """Seeded, time-ordered, valid records with awkward-but-legal field values."""
    rng = np.random.default_rng(seed)
    offsets = np.sort(rng.integers(0, int(span_hours * 3_600_000), n))
    n_files = n_files or max(1, n // 3)
    out = []
    for i in range(n):
        resolved_i = resolved if isinstance(resolved, bool) else rng.random() < 0.5
        fid = f"f{rng.integers(n_files)}"
        if rng.random() < 0.05:
            fid += ',"quoted" é'
        kw = {}
        if resolved_i:
            kw = dict(
                outcome=Outcome.HIT if rng.random() < 0.6 else Outcome.MISS,
                transfer_seconds=float(rng.lognormal(0, 2)),
                node_id=f"node-{rng.integers(4)}",
            )
        out.append(
            AccessRecord(
                ts=T0 + timedelta(milliseconds=int(offsets[i])),
                file_id=fid,
                file_class=str(classes[rng.integers(len(classes))]),
                size_bytes=int(rng.integers(1, 10**12)),
                **kw,
            )
        )
    return out


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def small_trace():
    return Trace(tuple(random_records(500, seed=3)))
