from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from ..aggregate import SummaryStats
from ..errors import InvalidRequest, UnadmissibleSize
from ..trace import AccessRecord, Outcome, Trace
from .cache import CacheNodeState
from .federation import BYPASS_NODE_ID, FederationSpec, PolicyMode
from .routing import rendezvous_pick
from .throughput import model_transfer_seconds

POLLUTER_CLASS = "L"
VICTIM_CLASS = "S"


@dataclass(frozen=True)
class SimulationReport:
    resolved: Trace
    summary: SummaryStats
    wan_bytes: int
    evictions_total: int
    pollution_evictions: int
    per_class_summary: dict[str, SummaryStats]
    uncached_misses: int = 0
    bypassed: int = 0

    def class_misses(self, file_class: str) -> int:
        s = self.per_class_summary.get(file_class)
        return s.total_misses if s else 0

    def as_dict(self) -> dict:
        return {
            "summary": self.summary.as_dict(),
            "wan_bytes": self.wan_bytes,
            "evictions_total": self.evictions_total,
            "pollution_evictions": self.pollution_evictions,
            "uncached_misses": self.uncached_misses,
            "bypassed": self.bypassed,
            "per_class_summary": {k: v.as_dict() for k, v in sorted(self.per_class_summary.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


class _Tally:
    __slots__ = ("hits", "misses", "hit_bytes", "miss_bytes")

    def __init__(self):
        self.hits = self.misses = self.hit_bytes = self.miss_bytes = 0

    def add(self, outcome, size):
        if outcome is Outcome.HIT:
            self.hits += 1
            self.hit_bytes += size
        else:
            self.misses += 1
            self.miss_bytes += size

    def stats(self) -> SummaryStats:
        return SummaryStats(self.hits, self.misses, self.hit_bytes, self.miss_bytes)


class FederationState:
    """Live cache state of a federation; feed it requests in time order."""

    def __init__(self, federation: FederationSpec):
        self.federation = federation
        self.nodes = {n.node_id: CacheNodeState(n) for n in federation.nodes}
        self.rng = np.random.default_rng(federation.rng_seed)
        self.evictions_total = 0
        self.pollution_evictions = 0
        self.uncached_misses = 0
        self.bypassed = 0
        self._class_of: dict[str, str] = {}
        self._routes: dict[tuple[str, str], str] = {}
        self._eligible: dict[str, list] = {}
        self.total = _Tally()
        self.per_class: dict[str, _Tally] = {}

    def route(self, file_id: str, file_class: str) -> str:
        key = (file_id, file_class)
        node = self._routes.get(key)
        if node is None:
            elig = self._eligible.get(file_class)
            if elig is None:
                elig = self._eligible[file_class] = self.federation.eligible(file_class)
            node = self._routes[key] = rendezvous_pick(file_id, elig)
        return node

    def process(self, rec: AccessRecord) -> AccessRecord:
        """Resolve one request, mutating cache state."""
        fed = self.federation
        policy = fed.policy
        size = rec.size_bytes
        if policy.mode is PolicyMode.BYPASS and size >= policy.bypass_threshold_bytes:
            outcome = Outcome.MISS
            node_id = BYPASS_NODE_ID
            self.bypassed += 1
        else:
            node_id = self.route(rec.file_id, rec.file_class)
            node = self.nodes[node_id]
            outcome = node.lookup_and_touch(rec.file_id)
            if outcome is Outcome.MISS:
                self._admit(node, rec)
        secs = model_transfer_seconds(size, outcome, fed.throughput_model, self.rng)
        self.total.add(outcome, size)
        tally = self.per_class.get(rec.file_class)
        if tally is None:
            tally = self.per_class[rec.file_class] = _Tally()
        tally.add(outcome, size)
        return replace(rec, outcome=outcome, transfer_seconds=secs, node_id=node_id)

    def _admit(self, node: CacheNodeState, rec: AccessRecord) -> None:
        try:
            evicted = node.evict_and_admit(rec.file_id, rec.size_bytes)
        except UnadmissibleSize:
            self.uncached_misses += 1
            return
        self._class_of[rec.file_id] = rec.file_class
        self.evictions_total += len(evicted)
        for fid in evicted:
            victim_cls = self._class_of.pop(fid)
            if victim_cls == VICTIM_CLASS and rec.file_class == POLLUTER_CLASS:
                self.pollution_evictions += 1


def simulate(requests: Trace | Iterable[AccessRecord], federation: FederationSpec) -> SimulationReport:
    """Replay a request stream through the federation.

    Every input record must have outcome ``unknown``; the returned trace has
    outcome, serving node and transfer time filled in. Fully deterministic
    for a given federation (including ``rng_seed``).
    """
    federation.validate()
    state = FederationState(federation)
    out = []
    prev = None
    for i, rec in enumerate(requests):
        if rec.outcome is not Outcome.UNKNOWN:
            raise InvalidRequest(f"record {i}: simulate expects unresolved requests, got outcome {rec.outcome.value}")
        if prev is not None and rec.ts < prev:
            raise InvalidRequest(f"record {i}: requests must be time-ordered")
        prev = rec.ts
        out.append(state.process(rec))
    source = requests.source if isinstance(requests, Trace) else ""
    summary = state.total.stats()
    return SimulationReport(
        resolved=Trace(tuple(out), source=f"simulate({source})" if source else "simulate"),
        summary=summary,
        wan_bytes=summary.miss_bytes,
        evictions_total=state.evictions_total,
        pollution_evictions=state.pollution_evictions,
        per_class_summary={k: v.stats() for k, v in sorted(state.per_class.items())},
        uncached_misses=state.uncached_misses,
        bypassed=state.bypassed,
    )
