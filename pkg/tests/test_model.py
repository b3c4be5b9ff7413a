import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hiplace.model import (
    AppEdgeSpec,
    ApplicationGraph,
    ComponentSpec,
    Partition,
    PartitionError,
    ResourceGraph,
    ResourceLinkSpec,
    ResourceNodeSpec,
    check_partition,
    induced_subgraph,
    partition_resources,
    validate_application,
    validate_resources,
)

from instances import random_resources


def comp(i, cpu=1.0, ddl=100.0):
    return ComponentSpec(i, cpu, 1.0, 1.0, 1.0, 1.0, ddl)


def edge(u, v):
    return AppEdgeSpec(u, v, 10.0, 1.0, 1.0)


def node(i, speed=1.0):
    return ResourceNodeSpec(i, 4.0, 1.0, 8.0, 16.0, 1.0, speed)


def link(u, v, bw=10.0):
    return ResourceLinkSpec(u, v, 1.0, bw)


def ring(n):
    return ResourceGraph(tuple(node(i) for i in range(n)), tuple(link(i, (i + 1) % n) for i in range(n)))


def grid(r, c):
    nodes = tuple(node(i) for i in range(r * c))
    links = []
    for i in range(r):
        for j in range(c):
            if j + 1 < c:
                links.append(link(i * c + j, i * c + j + 1))
            if i + 1 < r:
                links.append(link(i * c + j, (i + 1) * c + j))
    return ResourceGraph(nodes, tuple(links))


class TestValidateApplication:
    def test_chain_ok(self):
        app = ApplicationGraph(tuple(comp(i) for i in range(3)), (edge(0, 1), edge(1, 2)))
        assert validate_application(app) == []

    def test_dangling_endpoint(self):
        app = ApplicationGraph(tuple(comp(i) for i in range(3)), (edge(0, 1), edge(1, 7)))
        errs = validate_application(app)
        assert any("dangling endpoint" in e for e in errs)

    def test_negative_demand(self):
        app = ApplicationGraph((comp(0, cpu=-1.0), comp(1)), (edge(0, 1),))
        assert any("negative demand" in e for e in validate_application(app))

    def test_reports_every_problem(self):
        comps = (comp(0, cpu=-1.0), comp(0), comp(2, ddl=0.0))
        errs = validate_application(ApplicationGraph(comps, (edge(0, 9),)))
        assert len(errs) >= 3

    def test_disconnected(self):
        app = ApplicationGraph(tuple(comp(i) for i in range(3)), (edge(0, 1),))
        assert any("disconnected" in e for e in validate_application(app))

    def test_self_loop_and_duplicate_edge(self):
        app = ApplicationGraph((comp(0), comp(1)), (edge(0, 1), edge(1, 0), edge(1, 1)))
        errs = validate_application(app)
        assert any("self-loop" in e for e in errs)
        assert any("duplicate edge" in e for e in errs)


class TestValidateResources:
    def test_two_nodes_one_link_ok(self):
        assert validate_resources(ResourceGraph((node(0), node(1)), (link(0, 1),))) == []

    def test_zero_speed(self):
        errs = validate_resources(ResourceGraph((node(0, speed=0.0), node(1)), (link(0, 1),)))
        assert any("speed" in e for e in errs)

    def test_duplicate_link(self):
        errs = validate_resources(ResourceGraph((node(0), node(1)), (link(0, 1), link(1, 0))))
        assert any("duplicate link" in e for e in errs)

    def test_disconnected_available_subgraph(self):
        nodes = (node(0), ResourceNodeSpec(1, 1, 0, 1, 1, 0, 1, aval=False), node(2))
        errs = validate_resources(ResourceGraph(nodes, (link(0, 1), link(1, 2))))
        assert any("disconnected" in e for e in errs)


class TestPartition:
    def test_ring_split_in_two_arcs(self):
        res = ring(6)
        part = partition_resources(res, 2, seed=0)
        assert sorted(len(z) for z in part.zones) == [3, 3]
        assert check_partition(res, part) == []
        for z in range(2):
            sub = induced_subgraph(res, part, z)
            assert len(sub.nodes) == 3 and len(sub.links) == 2

    def test_single_zone_is_everything(self):
        res = grid(3, 3)
        part = partition_resources(res, 1, seed=5)
        assert part.assignment == tuple([0] * 9)

    def test_grid_three_zones_seed7(self):
        res = grid(3, 3)
        part = partition_resources(res, 3, seed=7)
        assert sorted(len(z) for z in part.zones) == [3, 3, 3]
        assert check_partition(res, part) == []

    def test_too_many_zones(self):
        with pytest.raises(PartitionError):
            partition_resources(ring(3), 4, seed=0)

    def test_fragmented_graph_reports_failure(self):
        # a star cannot be cut into three connected balanced pieces
        nodes = tuple(node(i) for i in range(6))
        star = ResourceGraph(nodes, tuple(link(0, i) for i in range(1, 6)))
        with pytest.raises(PartitionError):
            partition_resources(star, 3, seed=0)

    @given(seed=st.integers(0, 10_000), n=st.integers(2, 12), k=st.integers(1, 4), extra=st.floats(0.0, 0.6))
    def test_partition_properties(self, seed, n, k, extra):
        res = random_resources(np.random.default_rng(seed), n, extra)
        k = min(k, n)
        try:
            part = partition_resources(res, k, seed)
        except PartitionError:
            return
        assert check_partition(res, part) == []
        sizes = [len(z) for z in part.zones]
        assert sum(sizes) == n and max(sizes) - min(sizes) <= 1
        assert sorted(v for z in part.zones for v in z) == list(range(n))
        assert partition_resources(res, k, seed) == part

    def test_verifier_flags_bad_partition(self):
        res = ring(6)
        bad = Partition((0, 1, 0, 1, 0, 1), 2)
        assert check_partition(res, bad)


class TestInducedSubgraph:
    def test_whole_graph_identity(self):
        res = grid(2, 3)
        sub = induced_subgraph(res, Partition.single(6), 0)
        assert sub.global_ids == tuple(range(6))
        assert sub.nodes == res.nodes and sub.links == res.links

    def test_single_node_zone(self):
        res = ring(4)
        sub = induced_subgraph(res, Partition((0, 1, 1, 1), 2), 0)
        assert len(sub.nodes) == 1 and sub.links == ()

    def test_unknown_zone(self):
        with pytest.raises(ValueError):
            induced_subgraph(ring(4), Partition((0, 0, 1, 1), 2), 5)

    @given(seed=st.integers(0, 10_000))
    def test_attributes_preserved_and_union_covers(self, seed):
        rng = np.random.default_rng(seed)
        res = random_resources(rng, int(rng.integers(2, 9)), 0.5)
        k = int(rng.integers(1, 3))
        try:
            part = partition_resources(res, k, seed)
        except PartitionError:
            return
        seen = []
        for z in range(k):
            sub = induced_subgraph(res, part, z)
            for local, g in enumerate(sub.global_ids):
                a, b = sub.nodes[local], res.nodes[g]
                assert (a.cpu, a.gpu, a.ram, a.stor, a.pt, a.speed, a.aval) == (
                    b.cpu, b.gpu, b.ram, b.stor, b.pt, b.speed, b.aval)
            for l in sub.links:
                orig = res.links[res.link_index[tuple(sorted((sub.global_ids[l.u], sub.global_ids[l.v])))]]
                assert (l.latency, l.bandwidth) == (orig.latency, orig.bandwidth)
            seen += sub.global_ids
        assert sorted(seen) == list(range(len(res.nodes)))
