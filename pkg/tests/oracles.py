"""Brute-force reference implementations used as test oracles.

Everything here is written directly from the definitions, favouring
obviousness over speed. The only package code touched is the code under
test itself (e.g. the LSTM whose gradients are checked numerically).
"""

from __future__ import annotations

import math
from datetime import datetime, timedelta, timezone

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class ReferenceLRU:
    """List-based LRU with high/low watermarks (least recent first)."""

    def __init__(self, capacity: int, high: float, low: float):
        self.high_limit = math.floor(high * capacity)
        self.low_limit = math.floor(low * capacity)
        self.order: list[str] = []
        self.sizes: dict[str, int] = {}

    def used(self) -> int:
        return sum(self.sizes[f] for f in self.order)

    def request(self, file_id: str, size: int) -> str:
        if file_id in self.order:
            self.order.remove(file_id)
            self.order.append(file_id)
            return "hit"
        if size <= self.low_limit:
            if self.used() + size > self.high_limit:
                while self.used() + size > self.low_limit:
                    victim = self.order.pop(0)
                    del self.sizes[victim]
            self.order.append(file_id)
            self.sizes[file_id] = size
        return "miss"


def groupby_bins(records, bin_seconds: int) -> dict[int, dict]:
    """Bin index -> brute-force feature totals; index = floor(seconds since epoch / width)."""
    out: dict[int, dict] = {}
    width = timedelta(seconds=bin_seconds)
    for r in records:
        k = (r.ts - EPOCH) // width
        b = out.setdefault(k, {"miss_count": 0, "miss_bytes": 0, "hit_count": 0, "hit_bytes": 0,
                               "miss_tputs": [], "hit_tputs": []})
        kind = r.outcome.value
        b[f"{kind}_count"] += 1
        b[f"{kind}_bytes"] += r.size_bytes
        b[f"{kind}_tputs"].append(r.size_bytes / r.transfer_seconds)
    for b in out.values():
        for kind in ("miss", "hit"):
            t = b.pop(f"{kind}_tputs")
            b[f"avg_{kind}_throughput"] = math.fsum(t) / len(t) if t else 0.0
            b[f"agg_{kind}_throughput"] = b[f"{kind}_bytes"] / bin_seconds
    return out


def trailing_mean(series, window: int) -> list[float]:
    out = []
    for i in range(len(series)):
        chunk = series[max(0, i - window + 1) : i + 1]
        out.append(math.fsum(chunk) / len(chunk))
    return out


def two_pass_std(series) -> float:
    n = len(series)
    mean = math.fsum(series) / n
    return math.sqrt(math.fsum((x - mean) ** 2 for x in series) / n)


def zipf_pmf(population: int, exponent: float) -> list[float]:
    w = [1.0 / (k ** exponent) for k in range(1, population + 1)]
    z = math.fsum(w)
    return [x / z for x in w]


def central_difference(f, arrays, eps=1e-5):
    """Finite-difference gradient of scalar f() w.r.t. every entry of ``arrays`` (dict of ndarrays)."""
    import numpy as np

    grads = {}
    for name, a in arrays.items():
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + eps
            plus = f()
            a[idx] = orig - eps
            minus = f()
            a[idx] = orig
            g[idx] = (plus - minus) / (2 * eps)
        grads[name] = g
    return grads


def relative_error(a, b, floor=1e-5):
    """max |a-b| / max(|a|, |b|, floor), elementwise over arrays."""
    import numpy as np

    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def lstm_step_by_hand(x, h, c, Wi, Wf, Wo, Wg, Ui, Uf, Uo, Ug, bi, bf, bo, bg):
    """One LSTM step with scalar loops, for tiny hand-set weights."""
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    H = len(h)
    new_h, new_c = [], []
    for j in range(H):
        def pre(W, U, b):
            return sum(x[k] * W[k][j] for k in range(len(x))) + sum(h[k] * U[k][j] for k in range(H)) + b[j]
        i = sig(pre(Wi, Ui, bi))
        f = sig(pre(Wf, Uf, bf))
        o = sig(pre(Wo, Uo, bo))
        g = math.tanh(pre(Wg, Ug, bg))
        cj = f * c[j] + i * g
        new_c.append(cj)
        new_h.append(o * math.tanh(cj))
    return new_h, new_c


def lstm_gradient_worst_error(seed: int, hidden=4, window=5, batch=3, eps=1e-5, floor=1e-5) -> float:
    """Worst relative error between BPTT and central differences on one random model.

    Loss is the summed squared error of a small batch, with a dropout mask,
    so every parameter including the head is exercised.
    """
    import numpy as np

    from netcache.forecast.lstm import init_params, lstm_backward, lstm_forward

    rng = np.random.default_rng(seed)
    params = init_params(hidden, rng)
    for a in params.arrays().values():
        a += rng.normal(0, 0.3, a.shape)
    x = rng.random((batch, window, 8))
    y_true = rng.normal(size=batch)
    mask = (rng.random((batch, hidden)) > 0.3) / 0.7

    def loss():
        y, _ = lstm_forward(params, x, mask, keep_cache=False)
        return float(((y - y_true) ** 2).sum())

    y, cache = lstm_forward(params, x, mask)
    grads = lstm_backward(params, cache, 2 * (y - y_true)).arrays()
    fd = central_difference(loss, params.arrays(), eps)
    return max(relative_error(grads[k], fd[k], floor) for k in fd)
