"""Single cache node: LRU residency with high/low watermark eviction."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

from ..errors import UnadmissibleSize
from ..trace import Outcome


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    capacity_bytes: int
    high_watermark: float = 0.95
    low_watermark: float = 0.90

    def problems(self) -> list[str]:
        out = []
        if not self.node_id:
            out.append("node_id must be non-empty")
        if not isinstance(self.capacity_bytes, int) or self.capacity_bytes < 1:
            out.append(f"{self.node_id}: capacity_bytes must be a positive integer")
        if not (0 < self.high_watermark <= 1):
            out.append(f"{self.node_id}: high_watermark must be in (0, 1]")
        if not (0 < self.low_watermark <= self.high_watermark):
            out.append(f"{self.node_id}: low_watermark must be in (0, high_watermark]")
        return out

    @property
    def high_limit(self) -> int:
        """Largest used_bytes allowed after an admission."""
        return math.floor(self.high_watermark * self.capacity_bytes)

    @property
    def low_limit(self) -> int:
        """Eviction target, and the largest admissible file size."""
        return math.floor(self.low_watermark * self.capacity_bytes)


class CacheNodeState:
    """Mutable residency state of one node.

    ``resident`` is kept least-recent first (OrderedDict insertion order);
    :meth:`recency_order` gives the most-recent-first view.
    """

    def __init__(self, spec: NodeSpec):
        self.spec = spec
        self.resident: OrderedDict[str, int] = OrderedDict()
        self.used_bytes = 0

    def __contains__(self, file_id: str) -> bool:
        return file_id in self.resident

    def __repr__(self):
        return f"CacheNodeState({self.spec.node_id!r}, files={len(self.resident)}, used={self.used_bytes})"

    def recency_order(self) -> list[str]:
        return list(reversed(self.resident))

    def lookup_and_touch(self, file_id: str) -> Outcome:
        if file_id in self.resident:
            self.resident.move_to_end(file_id)
            return Outcome.HIT
        return Outcome.MISS

    def evict_and_admit(self, file_id: str, size_bytes: int) -> list[str]:
        """Admit ``file_id`` at the most-recent position.

        If the admission would push usage above the high watermark, LRU files
        are evicted until usage plus the new file fits under the low
        watermark. Returns the evicted ids in eviction order.

        Raises UnadmissibleSize for files above the low-watermark budget; the
        caller serves those without caching.
        """
        spec = self.spec
        if size_bytes > spec.low_limit:
            raise UnadmissibleSize(spec.node_id, file_id, size_bytes, spec.low_limit)
        if file_id in self.resident:
            self.resident.move_to_end(file_id)
            return []
        evicted = []
        if self.used_bytes + size_bytes > spec.high_limit:
            target = spec.low_limit - size_bytes
            while self.used_bytes > target:
                victim, vsize = self.resident.popitem(last=False)
                self.used_bytes -= vsize
                evicted.append(victim)
        self.resident[file_id] = size_bytes
        self.used_bytes += size_bytes
        return evicted


def lookup_and_touch(node: CacheNodeState, file_id: str) -> Outcome:
    return node.lookup_and_touch(file_id)


def evict_and_admit(node: CacheNodeState, file_id: str, size_bytes: int) -> list[str]:
    return node.evict_and_admit(file_id, size_bytes)
