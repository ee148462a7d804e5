import dataclasses
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import T0
from netcache.errors import ConfigError, InvalidRequest, UnadmissibleSize, UnmappedClass
from netcache.simulate import (
    BYPASS_NODE_ID,
    CacheNodeState,
    FederationSpec,
    FederationState,
    NodeSpec,
    PolicyMode,
    PolicySpec,
    ThroughputModelSpec,
    default_federation,
    evict_and_admit,
    federation_from_config,
    federation_to_config,
    lookup_and_touch,
    model_transfer_seconds,
    route,
    simulate,
    socal_node_specs,
)
from netcache.simulate.routing import unit_hash
from netcache.trace import AccessRecord, Outcome, Trace, validate_trace
from netcache.workload import default_socal_workload, generate
from oracles import ReferenceLRU

TB = 10**12


def req(i, fid, size=10, cls="S"):
    return AccessRecord(T0 + timedelta(seconds=i), fid, cls, size)


def one_node(capacity, high=1.0, low=1.0, **kw):
    return FederationSpec((NodeSpec("n0", capacity, high, low),), **kw)


def random_requests(n, seed, n_files=50, max_size=30, classes=("S",)):
    rng = np.random.default_rng(seed)
    fids = rng.integers(n_files, size=n)
    sizes = rng.integers(1, max_size + 1, size=n_files)
    cls = rng.integers(len(classes), size=n_files)
    return [req(i, f"f{f}", int(sizes[f]), classes[cls[f]]) for i, f in enumerate(fids)]


@pytest.fixture(scope="module")
def campaign_trace():
    return generate(default_socal_workload(1e-3, rng_seed=1))


# --- route ---------------------------------------------------------------


def brute_force_owner(key, nodes):
    scores = {nid: -w / np.log(unit_hash(nid, key)) for nid, w in nodes}
    return max(scores, key=lambda nid: (scores[nid], nid))


def test_single_node_routes_everything():
    fed = one_node(100)
    assert {route(f"f{i}", "S", fed) for i in range(100)} == {"n0"}


@given(n_nodes=st.integers(2, 8), seed=st.integers(0, 10**6))
def test_removing_unselected_node_is_stable(n_nodes, seed):
    rng = np.random.default_rng(seed)
    nodes = tuple(NodeSpec(f"n{i}", int(rng.integers(1, 1000))) for i in range(n_nodes))
    fed = FederationSpec(nodes)
    keys = [f"k{seed}-{i}" for i in range(200)]
    owner = {k: route(k, "S", fed) for k in keys}
    for k in keys:
        assert owner[k] == brute_force_owner(k, [(n.node_id, n.capacity_bytes) for n in nodes])
    drop = nodes[int(rng.integers(n_nodes))].node_id
    smaller = FederationSpec(tuple(n for n in nodes if n.node_id != drop))
    for k in keys:
        if owner[k] != drop:
            assert route(k, "S", smaller) == owner[k]


def test_weighted_fractions_3_to_1():
    fed = FederationSpec((NodeSpec("a", 3000), NodeSpec("b", 1000)))
    n = 100_000
    share = sum(route(f"file-{i}", "S", fed) == "a" for i in range(n)) / n
    assert share == pytest.approx(0.75, abs=0.02)


def test_partitioned_routes_inside_partition_and_unmapped_raises():
    nodes = socal_node_specs()
    fed = default_federation("partitioned")
    pmap = fed.policy.partition_map
    for i in range(200):
        assert route(f"x{i}", "L", fed) in pmap["L"]
        assert route(f"x{i}", "S", fed) in pmap["S"]
    assert pmap["S"].isdisjoint(pmap["L"]) and len(nodes) == 24
    with pytest.raises(UnmappedClass):
        route("x", "Z", fed)


# --- node state -------------------------------------------------------------


def test_lookup_examples():
    node = CacheNodeState(NodeSpec("n", 100, 1.0, 1.0))
    assert lookup_and_touch(node, "f1") is Outcome.MISS
    evict_and_admit(node, "f1", 10)
    assert lookup_and_touch(node, "f1") is Outcome.HIT


def test_refreshed_file_survives_eviction():
    node = CacheNodeState(NodeSpec("n", 100, 1.0, 1.0))
    evict_and_admit(node, "f1", 40)
    evict_and_admit(node, "f2", 40)
    lookup_and_touch(node, "f1")
    assert evict_and_admit(node, "f3", 40) == ["f2"]
    assert node.recency_order() == ["f3", "f1"]


def test_evict_example_capacity_100():
    node = CacheNodeState(NodeSpec("n", 100, 1.0, 1.0))
    assert evict_and_admit(node, "f1", 60) == []
    assert evict_and_admit(node, "f2", 60) == ["f1"]
    assert lookup_and_touch(node, "f1") is Outcome.MISS


def test_evict_example_capacity_200():
    node = CacheNodeState(NodeSpec("n", 200, 1.0, 1.0))
    assert evict_and_admit(node, "f1", 60) == []
    assert evict_and_admit(node, "f2", 60) == []
    assert lookup_and_touch(node, "f1") is Outcome.HIT


def test_watermark_batch_eviction():
    node = CacheNodeState(NodeSpec("n", 100, 0.9, 0.5))
    for i in range(9):
        evict_and_admit(node, f"f{i}", 10)
    assert node.used_bytes == 90
    # 90 + 10 > 90: evict down to 50 - 10 = 40 resident bytes first
    assert evict_and_admit(node, "new", 10) == ["f0", "f1", "f2", "f3", "f4"]
    assert node.used_bytes == 50


def test_unadmissible_size():
    node = CacheNodeState(NodeSpec("n", 100, 0.95, 0.9))
    with pytest.raises(UnadmissibleSize) as e:
        evict_and_admit(node, "big", 91)
    assert e.value.limit == 90 and node.used_bytes == 0


@pytest.mark.parametrize("seed", range(3))
def test_lru_matches_reference(seed):
    rng = np.random.default_rng(100 + seed)
    cap, high, low = int(rng.integers(50, 400)), 0.95, float(rng.uniform(0.5, 0.95))
    node = CacheNodeState(NodeSpec("n", cap, high, low))
    ref = ReferenceLRU(cap, high, low)
    for r in random_requests(20_000, seed, n_files=80, max_size=cap // 2):
        got = node.lookup_and_touch(r.file_id)
        if got is Outcome.MISS:
            try:
                node.evict_and_admit(r.file_id, r.size_bytes)
            except UnadmissibleSize:
                pass
        assert got.value == ref.request(r.file_id, r.size_bytes)
        assert node.used_bytes == ref.used() == sum(node.resident.values())
        assert node.used_bytes <= node.spec.high_limit
    assert node.recency_order() == ref.order[::-1]


# --- throughput model ---------------------------------------------------------


def test_transfer_asymptote_and_half_rate():
    m = ThroughputModelSpec(wan_max_bps=100.0, lan_max_bps=400.0, ramp_bytes=50.0, jitter_lognorm_sigma=0.0)
    rng = np.random.default_rng(0)
    big = 10**9
    assert model_transfer_seconds(big, Outcome.MISS, m, rng) == pytest.approx(big / 100.0, rel=0.01)
    assert 50 / model_transfer_seconds(50, Outcome.MISS, m, rng) == pytest.approx(50.0)
    assert 50 / model_transfer_seconds(50, Outcome.HIT, m, rng) == pytest.approx(200.0)


def test_large_files_get_higher_wan_throughput():
    m = ThroughputModelSpec()
    rng = np.random.default_rng(42)
    small = np.mean([3e7 / model_transfer_seconds(30_000_000, Outcome.MISS, m, rng) for _ in range(2000)])
    large = np.mean([4e9 / model_transfer_seconds(4_000_000_000, Outcome.MISS, m, rng) for _ in range(2000)])
    assert large > small


def test_transfer_deterministic_given_rng():
    m = ThroughputModelSpec()
    a = [model_transfer_seconds(10**8, Outcome.HIT, m, np.random.default_rng(3)) for _ in range(2)]
    assert a[0] == a[1]


# --- simulate ------------------------------------------------------------------


def test_one_request_is_a_miss():
    rep = simulate(Trace((req(0, "a", 7),)), one_node(100))
    assert rep.resolved[0].outcome is Outcome.MISS
    assert rep.wan_bytes == 7


def test_same_file_twice():
    rep = simulate([req(0, "a", 7), req(1, "a", 7)], one_node(100))
    assert [r.outcome for r in rep.resolved] == [Outcome.MISS, Outcome.HIT]
    assert rep.wan_bytes == 7
    assert validate_trace(rep.resolved) == []


def test_rejects_resolved_or_unordered_input():
    done = dataclasses.replace(req(0, "a"), outcome=Outcome.HIT, transfer_seconds=1.0, node_id="n0")
    with pytest.raises(InvalidRequest):
        simulate([done], one_node(100))
    with pytest.raises(InvalidRequest):
        simulate([req(5, "a"), req(1, "b")], one_node(100))


def test_oversized_file_served_uncached():
    rep = simulate([req(0, "big", 95), req(1, "big", 95)], one_node(100, 0.95, 0.9))
    assert [r.outcome for r in rep.resolved] == [Outcome.MISS, Outcome.MISS]
    assert rep.uncached_misses == 2


@given(seed=st.integers(0, 10**6), cap=st.integers(20, 300))
def test_simulation_properties(seed, cap):
    reqs = random_requests(400, seed, n_files=40, max_size=40, classes=("S", "L"))
    nodes = (NodeSpec("a", cap, 0.95, 0.8), NodeSpec("b", cap * 2, 0.9, 0.7))
    fed = FederationSpec(nodes, rng_seed=seed)
    state = FederationState(fed)
    seen = set()
    for r in reqs:
        out = state.process(r)
        if r.file_id not in seen:
            assert out.outcome is Outcome.MISS
        seen.add(r.file_id)
        for node in state.nodes.values():
            assert node.used_bytes == sum(node.resident.values())
            assert node.used_bytes <= node.spec.high_watermark * node.spec.capacity_bytes
    rep = simulate(reqs, fed)
    s = rep.summary
    assert rep.wan_bytes == s.miss_bytes
    assert s.hit_bytes + rep.wan_bytes == sum(r.size_bytes for r in reqs)
    assert rep.pollution_evictions <= rep.evictions_total
    assert sum(c.total_accesses for c in rep.per_class_summary.values()) == len(reqs)


def test_determinism_bit_identical(campaign_trace):
    fed = default_federation(rng_seed=5)
    a, b = simulate(campaign_trace, fed), simulate(campaign_trace, fed)
    assert a == b
    assert a.to_json() == b.to_json()
    c = simulate(campaign_trace, fed.with_seed(6))
    assert c.resolved != a.resolved


def test_partitioned_beats_unified_on_campaign(campaign_trace):
    uni = simulate(campaign_trace, default_federation("unified"))
    part = simulate(campaign_trace, default_federation("partitioned"))
    assert uni.pollution_evictions > 0
    assert part.pollution_evictions == 0
    assert part.class_misses("S") < uni.class_misses("S")


def test_bypass_neutral_with_huge_threshold(campaign_trace):
    uni = simulate(campaign_trace, default_federation("unified", rng_seed=3))
    big = max(r.size_bytes for r in campaign_trace) + 1
    byp = simulate(campaign_trace, default_federation("bypass", bypass_threshold_bytes=big, rng_seed=3))
    assert byp.bypassed == 0
    assert byp.as_dict() == uni.as_dict()
    assert byp.resolved == uni.resolved


def test_bypass_sends_large_files_to_origin():
    fed = FederationSpec((NodeSpec("n0", 1000),), PolicySpec(PolicyMode.BYPASS, bypass_threshold_bytes=50))
    rep = simulate([req(0, "big", 60), req(1, "big", 60), req(2, "s", 10), req(3, "s", 10)], fed)
    assert [r.node_id for r in rep.resolved] == [BYPASS_NODE_ID, BYPASS_NODE_ID, "n0", "n0"]
    assert [r.outcome.value for r in rep.resolved] == ["miss", "miss", "miss", "hit"]
    assert rep.bypassed == 2


def test_partition_isolation_no_l_evicts_s():
    nodes = (NodeSpec("s", 100, 1.0, 1.0), NodeSpec("l", 100, 1.0, 1.0))
    pol = PolicySpec(PolicyMode.PARTITIONED, {"S": frozenset({"s"}), "L": frozenset({"l"})})
    reqs = random_requests(3000, 1, n_files=60, max_size=40, classes=("S", "L"))
    part = simulate(reqs, FederationSpec(nodes, pol))
    assert part.pollution_evictions == 0
    assert simulate(reqs, FederationSpec(nodes)).pollution_evictions > 0


# --- topology and config --------------------------------------------------------


def test_default_topology():
    nodes = socal_node_specs(capacity_scale=1.0)
    assert len(nodes) == 24
    caps = sorted(n.capacity_bytes for n in nodes)
    assert caps[-1] == 388 * TB and caps.count(24 * TB) == 12 and 44 * TB in caps and 96 * TB in caps
    assert sum(caps) / 10**15 == pytest.approx(2.99, abs=0.01)


def test_federation_config_round_trip():
    fed = default_federation("partitioned", rng_seed=9)
    again = federation_from_config(federation_to_config(fed))
    assert again == fed


@pytest.mark.parametrize(
    "data",
    [
        {"nodes": []},
        {"nodes": [{"node_id": "a", "capacity_bytes": 10, "low_watermark": 0.99, "high_watermark": 0.5}]},
        {"nodes": [{"node_id": "a", "capacity_bytes": 10}], "policy": {"mode": "partitioned"}},
        {"preset": "socal", "policy": {"mode": "sideways"}},
        {"preset": "socal", "colour": "blue"},
        {"nodes": [{"node_id": "origin", "capacity_bytes": 10}]},
    ],
)
def test_bad_federation_config(data):
    with pytest.raises(ConfigError):
        federation_from_config(data)
