"""Application and resource graph data model, validation and zone partitioning."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

DIMENSIONS = ("cpu", "gpu", "ram", "stor")


@dataclass(frozen=True)
class ComponentSpec:
    """One application component (microservice) and its demands."""

    id: int
    cpu: float
    gpu: float
    ram: float
    stor: float
    work: float  # compute units; processing time on a node is work / speed
    ddl: float  # deadline, ms

    @property
    def demand(self) -> tuple[float, float, float, float]:
        return (self.cpu, self.gpu, self.ram, self.stor)


@dataclass(frozen=True)
class AppEdgeSpec:
    """Undirected communication requirement between two components."""

    u: int
    v: int
    max_latency: float  # ms
    msg_size: float  # data units
    min_bandwidth: float  # data units / ms

    @property
    def key(self) -> tuple[int, int]:
        return (min(self.u, self.v), max(self.u, self.v))


@dataclass(frozen=True)
class ApplicationGraph:
    components: tuple[ComponentSpec, ...]
    edges: tuple[AppEdgeSpec, ...] = ()
    name: str = "app"

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "edges", tuple(self.edges))

    def __len__(self) -> int:
        return len(self.components)

    @cached_property
    def neighbors(self) -> dict[int, list[tuple[int, int]]]:
        """component id -> sorted list of (neighbor id, edge index)."""
        nbrs: dict[int, list[tuple[int, int]]] = {c.id: [] for c in self.components}
        for k, e in enumerate(self.edges):
            nbrs.setdefault(e.u, []).append((e.v, k))
            nbrs.setdefault(e.v, []).append((e.u, k))
        for lst in nbrs.values():
            lst.sort()
        return nbrs


@dataclass(frozen=True)
class ResourceNodeSpec:
    """A compute node: capacities, response time, speed, availability."""

    id: int
    cpu: float
    gpu: float
    ram: float
    stor: float
    pt: float  # device response time, ms
    speed: float  # compute units / ms
    aval: bool = True

    @property
    def capacity(self) -> tuple[float, float, float, float]:
        return (self.cpu, self.gpu, self.ram, self.stor)


@dataclass(frozen=True)
class ResourceLinkSpec:
    u: int
    v: int
    latency: float  # ms
    bandwidth: float  # data units / ms

    @property
    def key(self) -> tuple[int, int]:
        return (min(self.u, self.v), max(self.u, self.v))

    def other(self, node: int) -> int:
        return self.v if node == self.u else self.u


@dataclass(frozen=True)
class ResourceGraph:
    """Undirected resource graph.

    ``global_ids`` maps local node indices back to ids of the graph this one was
    extracted from; ``None`` means the identity mapping.
    """

    nodes: tuple[ResourceNodeSpec, ...]
    links: tuple[ResourceLinkSpec, ...] = ()
    global_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        if self.global_ids is not None:
            object.__setattr__(self, "global_ids", tuple(self.global_ids))

    def __len__(self) -> int:
        return len(self.nodes)

    def to_global(self, i: int) -> int:
        return i if self.global_ids is None else self.global_ids[i]

    @cached_property
    def incident(self) -> dict[int, list[tuple[int, int]]]:
        """node id -> sorted list of (neighbor id, link index)."""
        inc: dict[int, list[tuple[int, int]]] = {n.id: [] for n in self.nodes}
        for k, l in enumerate(self.links):
            inc.setdefault(l.u, []).append((l.v, k))
            inc.setdefault(l.v, []).append((l.u, k))
        for lst in inc.values():
            lst.sort()
        return inc

    @cached_property
    def link_index(self) -> dict[tuple[int, int], int]:
        return {l.key: k for k, l in enumerate(self.links)}


@dataclass(frozen=True)
class Partition:
    """Assignment of every resource node to one local-agent zone."""

    assignment: tuple[int, ...]  # node id -> zone id
    n_zones: int

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(self.assignment))

    def zone_nodes(self, zone: int) -> tuple[int, ...]:
        if not 0 <= zone < self.n_zones:
            raise ValueError(f"unknown zone id {zone}")
        return tuple(i for i, z in enumerate(self.assignment) if z == zone)

    @property
    def zones(self) -> list[tuple[int, ...]]:
        return [self.zone_nodes(z) for z in range(self.n_zones)]

    @classmethod
    def single(cls, n_nodes: int) -> Partition:
        return cls(tuple([0] * n_nodes), 1)


class PartitionError(ValueError):
    pass


def _connected(nodes: Iterable[int], adjacency: dict[int, list[tuple[int, int]]]) -> bool:
    nodes = set(nodes)
    if not nodes:
        return True
    start = min(nodes)
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v, _ in adjacency.get(u, ()):
            if v in nodes and v not in seen:
                seen.add(v)
                queue.append(v)
    return seen == nodes


def _check_ids(ids: Sequence[int], what: str) -> list[str]:
    if sorted(ids) == list(range(len(ids))) and len(set(ids)) == len(ids):
        return []
    errors = []
    dup = sorted({i for i in ids if list(ids).count(i) > 1})
    if dup:
        errors.append(f"duplicate {what} ids: {dup}")
    if sorted(set(ids)) != list(range(len(set(ids)))):
        errors.append(f"{what} ids must be contiguous from 0, got {sorted(ids)}")
    return errors


def validate_application(app: ApplicationGraph) -> list[str]:
    """Return every violated invariant of ``app``; an empty list means valid."""
    errors = _check_ids([c.id for c in app.components], "component")
    if not app.components:
        errors.append("application has no components")
    ids = {c.id for c in app.components}
    for c in app.components:
        for name in ("cpu", "gpu", "ram", "stor", "work"):
            if getattr(c, name) < 0:
                errors.append(f"component {c.id}: negative demand {name}={getattr(c, name)}")
        if not c.ddl > 0:
            errors.append(f"component {c.id}: deadline must be > 0, got {c.ddl}")
    seen_pairs = set()
    for k, e in enumerate(app.edges):
        for end in (e.u, e.v):
            if end not in ids:
                errors.append(f"edge {k}: dangling endpoint {end}")
        if e.u == e.v:
            errors.append(f"edge {k}: self-loop on component {e.u}")
        if e.key in seen_pairs:
            errors.append(f"edge {k}: duplicate edge between {e.key}")
        seen_pairs.add(e.key)
        if not e.max_latency > 0:
            errors.append(f"edge {k}: max_latency must be > 0")
        if e.msg_size < 0:
            errors.append(f"edge {k}: negative msg_size")
        if not e.min_bandwidth > 0:
            errors.append(f"edge {k}: min_bandwidth must be > 0")
    if app.components and not _connected(ids, app.neighbors):
        errors.append("application graph is disconnected")
    return errors


def validate_resources(res: ResourceGraph) -> list[str]:
    """Return every violated invariant of ``res``; an empty list means valid."""
    errors = _check_ids([n.id for n in res.nodes], "node")
    if not res.nodes:
        errors.append("resource graph has no nodes")
    ids = {n.id for n in res.nodes}
    for n in res.nodes:
        for name in DIMENSIONS:
            if getattr(n, name) < 0:
                errors.append(f"node {n.id}: negative capacity {name}={getattr(n, name)}")
        if n.pt < 0:
            errors.append(f"node {n.id}: negative response time pt={n.pt}")
        if not n.speed > 0:
            errors.append(f"node {n.id}: speed must be > 0, got {n.speed}")
    seen_pairs = set()
    for k, l in enumerate(res.links):
        for end in (l.u, l.v):
            if end not in ids:
                errors.append(f"link {k}: dangling endpoint {end}")
        if l.u == l.v:
            errors.append(f"link {k}: self-loop on node {l.u}")
        if l.key in seen_pairs:
            errors.append(f"link {k}: duplicate link between {l.key}")
        seen_pairs.add(l.key)
        if l.latency < 0:
            errors.append(f"link {k}: negative latency")
        if not l.bandwidth > 0:
            errors.append(f"link {k}: bandwidth must be > 0")
    if res.nodes:
        available = [n.id for n in res.nodes if n.aval]
        if not _connected(available, res.incident):
            errors.append("available resource subgraph is disconnected")
    return errors


def partition_resources(
    res: ResourceGraph, n_zones: int, seed: int, max_retries: int = 100
) -> Partition:
    """Split the resource graph into ``n_zones`` connected, balanced zones.

    Zones grow by multi-source BFS from randomly drawn seed nodes, each zone
    claiming its nearest unclaimed node in turn and stopping at ceil(n/k) nodes.
    Zone ids are renumbered so that zone 0 holds the lowest node id.
    """
    n = len(res.nodes)
    if n_zones < 1:
        raise PartitionError("n_zones must be positive")
    if n_zones > n:
        raise PartitionError(f"n_zones={n_zones} exceeds node count {n}")
    if n_zones == 1:
        return Partition.single(n)

    rng = random.Random(seed)
    cap = -(-n // n_zones)
    for _ in range(max_retries):
        seeds = rng.sample(range(n), n_zones)
        owner = [-1] * n
        frontiers = []
        sizes = [1] * n_zones
        for z, s in enumerate(seeds):
            owner[s] = z
            frontiers.append(deque(v for v, _ in res.incident[s]))
        progress = True
        while progress:
            progress = False
            for z in range(n_zones):
                if sizes[z] >= cap:
                    continue
                q = frontiers[z]
                while q and owner[q[0]] != -1:
                    q.popleft()
                if not q:
                    continue
                u = q.popleft()
                owner[u] = z
                sizes[z] += 1
                q.extend(v for v, _ in res.incident[u] if owner[v] == -1)
                progress = True
        if -1 in owner or max(sizes) - min(sizes) > 1:
            continue
        order = sorted(range(n_zones), key=lambda z: owner.index(z))
        relabel = {old: new for new, old in enumerate(order)}
        part = Partition(tuple(relabel[z] for z in owner), n_zones)
        if all(_connected(part.zone_nodes(z), res.incident) for z in range(n_zones)):
            return part
    raise PartitionError(
        f"could not find {n_zones} connected balanced zones after {max_retries} retries"
    )


def induced_subgraph(res: ResourceGraph, part: Partition, zone: int) -> ResourceGraph:
    """Zone subgraph with nodes re-indexed from 0; ``global_ids`` maps back."""
    members = part.zone_nodes(zone)
    local = {g: i for i, g in enumerate(members)}
    nodes = []
    for g in members:
        spec = res.nodes[g]
        nodes.append(
            ResourceNodeSpec(local[g], spec.cpu, spec.gpu, spec.ram, spec.stor, spec.pt, spec.speed, spec.aval)
        )
    links = [
        ResourceLinkSpec(local[l.u], local[l.v], l.latency, l.bandwidth)
        for l in res.links
        if l.u in local and l.v in local
    ]
    return ResourceGraph(tuple(nodes), tuple(links), tuple(res.to_global(g) for g in members))


def check_partition(res: ResourceGraph, part: Partition) -> list[str]:
    """Verifier used by tests and the CLI: coverage, connectivity and balance."""
    errors = []
    if len(part.assignment) != len(res.nodes):
        errors.append("assignment length differs from node count")
    if any(not 0 <= z < part.n_zones for z in part.assignment):
        errors.append("zone id out of range")
        return errors
    sizes = [len(part.zone_nodes(z)) for z in range(part.n_zones)]
    if min(sizes) == 0:
        errors.append("empty zone")
    if max(sizes) - min(sizes) > 1:
        errors.append(f"unbalanced zones {sizes}")
    for z in range(part.n_zones):
        if not _connected(part.zone_nodes(z), res.incident):
            errors.append(f"zone {z} is disconnected")
    return errors


__all__ = [
    "DIMENSIONS",
    "AppEdgeSpec",
    "ApplicationGraph",
    "ComponentSpec",
    "Partition",
    "PartitionError",
    "ResourceGraph",
    "ResourceLinkSpec",
    "ResourceNodeSpec",
    "check_partition",
    "induced_subgraph",
    "partition_resources",
    "validate_application",
    "validate_resources",
]
