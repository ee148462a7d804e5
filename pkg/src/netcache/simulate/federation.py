"""Federation topology, operating policies and their config-file form."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..config import Fields
from ..errors import ConfigError, UnmappedClass
from .cache import NodeSpec
from .routing import rendezvous_pick
from .throughput import ThroughputModelSpec

TB = 10**12
BYPASS_NODE_ID = "origin"

# Desk-scale defaults: file sizes shrink by SIZE_SCALE and request rates by
# RATE_SCALE, so capacities shrink by their product to keep the ratio of cache
# size to traffic volume of the real deployment.
SIZE_SCALE = 1e-6
RATE_SCALE = 1e-3
CAPACITY_SCALE = SIZE_SCALE * RATE_SCALE


class PolicyMode(enum.Enum):
    UNIFIED = "unified"
    PARTITIONED = "partitioned"
    BYPASS = "bypass"


@dataclass(frozen=True)
class PolicySpec:
    mode: PolicyMode = PolicyMode.UNIFIED
    partition_map: Mapping[str, frozenset[str]] = field(default_factory=dict)
    bypass_threshold_bytes: int | None = None
    allow_overlap: bool = False

    def problems(self, node_ids: set[str]) -> list[str]:
        out = []
        if self.mode is PolicyMode.PARTITIONED:
            if not self.partition_map:
                out.append("policy.partition_map required for partitioned mode")
            seen: dict[str, str] = {}
            for cls, ids in self.partition_map.items():
                if not ids:
                    out.append(f"policy.partition_map.{cls}: empty node set")
                for nid in ids:
                    if nid not in node_ids:
                        out.append(f"policy.partition_map.{cls}: unknown node {nid!r}")
                    if nid in seen and not self.allow_overlap:
                        out.append(f"policy.partition_map: node {nid!r} in both {seen[nid]!r} and {cls!r}")
                    seen.setdefault(nid, cls)
        if self.mode is PolicyMode.BYPASS:
            t = self.bypass_threshold_bytes
            if not isinstance(t, int) or t < 1:
                out.append("policy.bypass_threshold_bytes must be a positive integer in bypass mode")
        return out


@dataclass(frozen=True)
class FederationSpec:
    nodes: tuple[NodeSpec, ...]
    policy: PolicySpec = PolicySpec()
    throughput_model: ThroughputModelSpec = ThroughputModelSpec()
    rng_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.nodes, tuple):
            object.__setattr__(self, "nodes", tuple(self.nodes))

    def problems(self) -> list[str]:
        out = []
        if not self.nodes:
            out.append("nodes must be non-empty")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            out.append("node ids must be unique")
        if BYPASS_NODE_ID in ids:
            out.append(f"node id {BYPASS_NODE_ID!r} is reserved for bypassed transfers")
        for n in self.nodes:
            out.extend(n.problems())
        out.extend(self.policy.problems(set(ids)))
        out.extend(self.throughput_model.problems())
        return out

    def validate(self) -> "FederationSpec":
        bad = self.problems()
        if bad:
            raise ConfigError("invalid federation: " + "; ".join(bad))
        return self

    @property
    def total_capacity(self) -> int:
        return sum(n.capacity_bytes for n in self.nodes)

    def eligible(self, file_class: str) -> list[tuple[str, float]]:
        if self.policy.mode is PolicyMode.PARTITIONED:
            ids = self.policy.partition_map.get(file_class)
            if not ids:
                raise UnmappedClass(file_class)
            return [(n.node_id, n.capacity_bytes) for n in self.nodes if n.node_id in ids]
        return [(n.node_id, n.capacity_bytes) for n in self.nodes]

    def with_policy(self, policy: PolicySpec) -> "FederationSpec":
        return FederationSpec(self.nodes, policy, self.throughput_model, self.rng_seed)

    def with_seed(self, seed: int) -> "FederationSpec":
        return FederationSpec(self.nodes, self.policy, self.throughput_model, seed)


def route(file_id: str, file_class: str, federation: FederationSpec) -> str:
    """Node responsible for ``file_id`` under the federation's policy."""
    return rendezvous_pick(file_id, federation.eligible(file_class))


# --- default topology ------------------------------------------------------


def socal_node_specs(capacity_scale: float = CAPACITY_SCALE, high=0.95, low=0.90) -> list[NodeSpec]:
    """The 24-node regional federation.

    11 nodes with capacities linearly spaced 96..388 TB, 12 nodes of 24 TB and
    one 44 TB node, every capacity multiplied by ``capacity_scale``.
    """
    tb = []
    tb += [(f"caltech-{i + 1:02d}", c) for i, c in enumerate(np.linspace(96, 388, 11))]
    tb += [(f"ucsd-{i + 1:02d}", 24.0) for i in range(12)]
    tb += [("esnet-sunnyvale", 44.0)]
    return [NodeSpec(nid, max(1, int(round(c * TB * capacity_scale))), high, low) for nid, c in tb]


def socal_partition_map(nodes) -> dict[str, frozenset[str]]:
    """Small-format files on the UCSD and ESnet nodes, large-format on Caltech."""
    ids = [n.node_id for n in nodes]
    return {
        "S": frozenset(i for i in ids if not i.startswith("caltech-")),
        "L": frozenset(i for i in ids if i.startswith("caltech-")),
    }


def default_federation(
    mode: PolicyMode | str = PolicyMode.UNIFIED,
    *,
    capacity_scale: float = CAPACITY_SCALE,
    size_scale: float = SIZE_SCALE,
    bypass_threshold_bytes: int | None = None,
    rng_seed: int = 0,
) -> FederationSpec:
    mode = PolicyMode(mode) if not isinstance(mode, PolicyMode) else mode
    nodes = socal_node_specs(capacity_scale)
    if bypass_threshold_bytes is None:
        bypass_threshold_bytes = max(1, int(round(1e9 * size_scale)))
    policy = PolicySpec(
        mode=mode,
        partition_map=socal_partition_map(nodes) if mode is PolicyMode.PARTITIONED else {},
        bypass_threshold_bytes=bypass_threshold_bytes if mode is PolicyMode.BYPASS else None,
    )
    return FederationSpec(tuple(nodes), policy, ThroughputModelSpec.scaled(size_scale), rng_seed)


# --- config ------------------------------------------------------------------


def federation_from_config(data: dict, seed: int | None = None) -> FederationSpec:
    """Build a FederationSpec from a parsed config mapping.

    Either ``nodes`` is given explicitly or ``preset: socal`` expands to the
    default topology (with optional ``capacity_scale``/``size_scale``).
    """
    f = Fields(data, "federation")
    preset = f.raw("preset")
    capacity_scale = f.num("capacity_scale", CAPACITY_SCALE)
    size_scale = f.num("size_scale", SIZE_SCALE)
    if preset is not None:
        if preset != "socal":
            raise ConfigError(f"federation.preset: unknown preset {preset!r}")
        nodes = socal_node_specs(capacity_scale)
        if "nodes" in data:
            raise ConfigError("federation: give either preset or nodes, not both")
    else:
        raw_nodes = f.raw("nodes", required=True)
        if not isinstance(raw_nodes, list):
            raise ConfigError("federation.nodes: expected a list")
        nodes = []
        for i, nd in enumerate(raw_nodes):
            nf = Fields(nd, f"federation.nodes[{i}]")
            nodes.append(
                NodeSpec(
                    nf.str("node_id", required=True),
                    nf.int("capacity_bytes", required=True),
                    nf.num("high_watermark", 0.95),
                    nf.num("low_watermark", 0.90),
                )
            )
            nf.finish()
    pol = Fields(f.raw("policy", {}) or {}, "federation.policy")
    try:
        mode = PolicyMode(pol.str("mode", "unified"))
    except ValueError:
        raise ConfigError(f"federation.policy.mode: expected one of unified/partitioned/bypass") from None
    pmap_raw = pol.raw("partition_map")
    if pmap_raw is None and mode is PolicyMode.PARTITIONED and preset == "socal":
        pmap = socal_partition_map(nodes)
    else:
        pmap = {}
        for cls, ids in (pmap_raw or {}).items():
            if not isinstance(ids, list) or not all(isinstance(x, str) for x in ids):
                raise ConfigError(f"federation.policy.partition_map.{cls}: expected a list of node ids")
            pmap[str(cls)] = frozenset(ids)
    threshold = pol.raw("bypass_threshold_bytes")
    if threshold is None and mode is PolicyMode.BYPASS:
        threshold = max(1, int(round(1e9 * size_scale)))
    policy = PolicySpec(mode, pmap, threshold, bool(pol.raw("allow_overlap", False)))
    pol.finish()
    tm_f = Fields(f.raw("throughput_model", {}) or {}, "federation.throughput_model")
    base = ThroughputModelSpec.scaled(size_scale)
    tm = ThroughputModelSpec(
        tm_f.num("wan_max_bps", base.wan_max_bps),
        tm_f.num("lan_max_bps", base.lan_max_bps),
        tm_f.num("ramp_bytes", base.ramp_bytes),
        tm_f.num("jitter_lognorm_sigma", base.jitter_lognorm_sigma),
    )
    tm_f.finish()
    rng_seed = f.int("rng_seed", 0)
    f.finish()
    if seed is not None:
        rng_seed = seed
    return FederationSpec(tuple(nodes), policy, tm, rng_seed).validate()


def federation_to_config(fed: FederationSpec) -> dict:
    pol = {"mode": fed.policy.mode.value}
    if fed.policy.partition_map:
        pol["partition_map"] = {k: sorted(v) for k, v in sorted(fed.policy.partition_map.items())}
    if fed.policy.bypass_threshold_bytes is not None:
        pol["bypass_threshold_bytes"] = fed.policy.bypass_threshold_bytes
    if fed.policy.allow_overlap:
        pol["allow_overlap"] = True
    tm = fed.throughput_model
    return {
        "rng_seed": fed.rng_seed,
        "nodes": [
            {
                "node_id": n.node_id,
                "capacity_bytes": n.capacity_bytes,
                "high_watermark": n.high_watermark,
                "low_watermark": n.low_watermark,
            }
            for n in fed.nodes
        ],
        "policy": pol,
        "throughput_model": {
            "wan_max_bps": tm.wan_max_bps,
            "lan_max_bps": tm.lan_max_bps,
            "ramp_bytes": tm.ramp_bytes,
            "jitter_lognorm_sigma": tm.jitter_lognorm_sigma,
        },
    }
