"""Capacity-weighted rendezvous (highest random weight) hashing.

Each (node, key) pair hashes to a uniform u in (0, 1); the node score is
``-weight / ln(u)`` and the highest score wins. This gives every node a
selection probability proportional to its weight, and removing a node only
moves the keys that node owned.
"""

from __future__ import annotations

import functools
import hashlib
import math
from typing import Iterable, Sequence

_TWO64 = float(2**64)


@functools.lru_cache(maxsize=1 << 20)
def unit_hash(node_id: str, key: str) -> float:
    """Deterministic uniform value in the open interval (0, 1)."""
    digest = hashlib.blake2b(f"{node_id}\x00{key}".encode("utf-8"), digest_size=8).digest()
    return (int.from_bytes(digest, "big") + 0.5) / _TWO64


def score(node_id: str, weight: float, key: str) -> float:
    return -weight / math.log(unit_hash(node_id, key))


def rendezvous_pick(key: str, nodes: Iterable[tuple[str, float]]) -> str:
    """Return the winning node id among ``(node_id, weight)`` pairs."""
    best_id = None
    best = -1.0
    for node_id, weight in nodes:
        s = score(node_id, weight, key)
        if s > best or (s == best and best_id is not None and node_id > best_id):
            best, best_id = s, node_id
    if best_id is None:
        raise ValueError("no eligible nodes")
    return best_id


def rendezvous_rank(key: str, nodes: Sequence[tuple[str, float]]) -> list[str]:
    """All node ids ordered best-first (useful for fallbacks and debugging)."""
    return [n for n, _ in sorted(nodes, key=lambda nw: (score(nw[0], nw[1], key), nw[0]), reverse=True)]
