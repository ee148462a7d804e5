"""Deterministic federated-cache simulator."""

from .cache import CacheNodeState, NodeSpec, evict_and_admit, lookup_and_touch
from .engine import FederationState, SimulationReport, simulate
from .federation import (
    BYPASS_NODE_ID,
    CAPACITY_SCALE,
    RATE_SCALE,
    SIZE_SCALE,
    FederationSpec,
    PolicyMode,
    PolicySpec,
    default_federation,
    federation_from_config,
    federation_to_config,
    route,
    socal_node_specs,
    socal_partition_map,
)
from .throughput import ThroughputModelSpec, model_transfer_seconds

__all__ = [
    "BYPASS_NODE_ID",
    "CAPACITY_SCALE",
    "CacheNodeState",
    "FederationSpec",
    "FederationState",
    "NodeSpec",
    "PolicyMode",
    "PolicySpec",
    "RATE_SCALE",
    "SIZE_SCALE",
    "SimulationReport",
    "ThroughputModelSpec",
    "default_federation",
    "evict_and_admit",
    "federation_from_config",
    "federation_to_config",
    "lookup_and_touch",
    "model_transfer_seconds",
    "route",
    "simulate",
    "socal_node_specs",
    "socal_partition_map",
]
