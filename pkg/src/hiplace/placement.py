"""Placement state, constrained routing, action masks, heuristics and the exhaustive oracle."""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .costs import MetricWeights, comm_time, cost_report
from .model import DIMENSIONS, AppEdgeSpec, ApplicationGraph, ResourceGraph

HEURISTICS = ("first_fit", "best_fit", "worst_fit", "round_robin")
ORACLE_LIMIT = 10**7


class PlacementError(ValueError):
    """Raised when a placement violates a constraint; ``constraint`` names it."""

    def __init__(self, constraint: str, message: str = ""):
        super().__init__(message or constraint)
        self.constraint = constraint


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class PlacedApp:
    app: ApplicationGraph
    host: tuple[int | None, ...]
    routes: tuple[tuple[int, ...] | None, ...]


@dataclass(frozen=True)
class PlacementState:
    """Partial placement of the current application plus archived earlier ones.

    ``routes[k]`` is the link-index path of application edge ``k``, oriented from
    the host of the smaller component id to the host of the larger one.
    ``residual`` is shared by all applications placed so far.
    """

    res: ResourceGraph
    app: ApplicationGraph
    order: tuple[int, ...]
    host: tuple[int | None, ...]
    routes: tuple[tuple[int, ...] | None, ...]
    residual: tuple[tuple[float, ...], ...]
    aval: tuple[bool, ...]
    step: int = 0
    history: tuple[PlacedApp, ...] = ()
    clock: int = -1  # last step whose availability dynamics were applied

    @property
    def next_component(self) -> int | None:
        for c in self.order:
            if self.host[c] is None:
                return c
        return None

    @property
    def complete(self) -> bool:
        return all(h is not None for h in self.host)

    def all_apps(self) -> tuple[PlacedApp, ...]:
        return self.history + (PlacedApp(self.app, self.host, self.routes),)

    def hosting(self) -> set[int]:
        """Nodes hosting at least one component of any application."""
        return {h for p in self.all_apps() for h in p.host if h is not None}

    def with_aval(self, aval: Sequence[bool], clock: int | None = None) -> PlacementState:
        return PlacementState(
            self.res, self.app, self.order, self.host, self.routes, self.residual,
            tuple(bool(a) for a in aval), self.step, self.history,
            self.clock if clock is None else clock,
        )


@dataclass(frozen=True)
class PlacementFailure:
    """No feasible node for ``component``; ``state`` holds the partial placement."""

    component: int
    state: PlacementState


@dataclass(frozen=True)
class ActionMask:
    nodes: tuple[int, ...]  # global node ids, in action-index order
    allowed: tuple[bool, ...]

    @property
    def any(self) -> bool:
        return any(self.allowed)


def placement_order(app: ApplicationGraph) -> tuple[int, ...]:
    """BFS visitation order from component 0, neighbors in id order."""
    if not app.components:
        return ()
    order = []
    seen = {0}
    queue = deque([0])
    while queue:
        c = queue.popleft()
        order.append(c)
        for n, _ in app.neighbors[c]:
            if n not in seen:
                seen.add(n)
                queue.append(n)
    order.extend(c.id for c in app.components if c.id not in seen)
    return tuple(order)


def _blank_app_state(app: ApplicationGraph) -> tuple[tuple, tuple, tuple]:
    return placement_order(app), tuple([None] * len(app)), tuple([None] * len(app.edges))


def initial_state(
    res: ResourceGraph, app: ApplicationGraph, aval: Sequence[bool] | None = None
) -> PlacementState:
    order, host, routes = _blank_app_state(app)
    aval = tuple(n.aval for n in res.nodes) if aval is None else tuple(bool(a) for a in aval)
    residual = tuple(tuple(float(x) for x in n.capacity) for n in res.nodes)
    return PlacementState(res, app, order, host, routes, residual, aval)


def start_app(state: PlacementState, app: ApplicationGraph) -> PlacementState:
    """Archive the current application (as placed so far) and begin ``app``."""
    order, host, routes = _blank_app_state(app)
    return PlacementState(
        state.res, app, order, host, routes, state.residual, state.aval,
        state.step, state.history + (PlacedApp(state.app, state.host, state.routes),), state.clock,
    )


def shortest_route(
    res: ResourceGraph,
    aval: Sequence[bool],
    edge: AppEdgeSpec,
    src: int,
    dst: int,
) -> tuple[tuple[int, ...], float] | None:
    """Minimum transfer-time path over available nodes and wide-enough links.

    Returns ``(link indices, comm_time)`` or ``None`` if no such path exists.
    Latency bounds are not checked here.
    """
    if not (aval[src] and aval[dst]):
        return None
    if src == dst:
        return (), 0.0
    dist = {src: 0.0}
    prev: dict[int, tuple[int, int]] = {}
    heap = [(0.0, src)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == dst:
            break
        for v, k in res.incident[u]:
            link = res.links[k]
            if v in done or not aval[v] or link.bandwidth < edge.min_bandwidth:
                continue
            nd = d + (link.latency + edge.msg_size / link.bandwidth)
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                prev[v] = (u, k)
                heapq.heappush(heap, (nd, v))
    if dst not in done:
        return None
    path = []
    node = dst
    while node != src:
        node, k = prev[node]
        path.append(k)
    path.reverse()
    return tuple(path), dist[dst]


def route(
    state: PlacementState, res: ResourceGraph, edge: AppEdgeSpec, src: int, dst: int
) -> tuple[int, ...] | None:
    """Cheapest feasible link path for ``edge`` from ``src`` to ``dst``, or None.

    None means no path satisfies the bandwidth requirement or the cheapest one
    exceeds the edge's latency bound. ``src == dst`` yields the empty path.
    """
    found = shortest_route(res, state.aval, edge, src, dst)
    if found is None:
        return None
    path, _ = found
    if comm_time(edge, [res.links[k] for k in path]) > edge.max_latency:
        return None
    return path


def _route_for(state: PlacementState, k: int, host_of: dict[int, int]) -> tuple[int, ...] | None:
    edge = state.app.edges[k]
    a, b = edge.key
    return route(state, state.res, edge, host_of[a], host_of[b])


def _violation(state: PlacementState, c: int, v: int) -> tuple[str, str] | None:
    """First constraint violated by placing ``c`` on ``v``; None when feasible."""
    if state.host[c] is not None:
        return "placed", f"component {c} is already placed"
    if not state.aval[v]:
        return "availability", f"node {v} is unavailable"
    demand = state.app.components[c].demand
    for dim, need, left in zip(DIMENSIONS, demand, state.residual[v]):
        if need > left:
            return f"capacity:{dim}", f"node {v} has {left} {dim} left, component {c} needs {need}"
    host_of = {i: h for i, h in enumerate(state.host) if h is not None}
    host_of[c] = v
    for n, k in state.app.neighbors[c]:
        if n in host_of and n != c and _route_for(state, k, host_of) is None:
            return f"route:{min(c, n)}-{max(c, n)}", f"no feasible path for edge {state.app.edges[k].key}"
    return None


def action_mask(state: PlacementState, c: int, local_nodes: Iterable[int] | None = None) -> ActionMask:
    """Feasibility of every candidate node for component ``c``."""
    nodes = tuple(range(len(state.res.nodes))) if local_nodes is None else tuple(local_nodes)
    return ActionMask(nodes, tuple(_violation(state, c, v) is None for v in nodes))


def check_conservation(state: PlacementState, tol: float = 1e-9) -> None:
    """Assert residual + allocated == capacity and residual >= 0 everywhere."""
    allocated = [[0.0] * len(DIMENSIONS) for _ in state.res.nodes]
    for placed in state.all_apps():
        for c in placed.app.components:
            h = placed.host[c.id]
            if h is not None:
                for d, need in enumerate(c.demand):
                    allocated[h][d] += need
    for node, left, used in zip(state.res.nodes, state.residual, allocated):
        for d, cap in enumerate(node.capacity):
            assert left[d] >= 0, f"node {node.id} {DIMENSIONS[d]} residual {left[d]} < 0"
            assert abs(left[d] + used[d] - cap) <= tol * max(1.0, abs(cap)), (
                f"node {node.id} {DIMENSIONS[d]}: residual {left[d]} + allocated {used[d]} != {cap}"
            )


def apply(state: PlacementState, c: int, v: int) -> PlacementState:
    """Place component ``c`` on node ``v`` and route its edges to placed neighbors.

    Raises ``PlacementError`` naming the violated constraint (``availability``,
    ``capacity:<dim>``, ``route:<a>-<b>`` or ``placed``).
    """
    bad = _violation(state, c, v)
    if bad is not None:
        raise PlacementError(*bad)
    demand = state.app.components[c].demand
    residual = list(state.residual)
    residual[v] = tuple(left - need for left, need in zip(residual[v], demand))
    host = list(state.host)
    host[c] = v
    host_of = {i: h for i, h in enumerate(host) if h is not None}
    routes = list(state.routes)
    for n, k in state.app.neighbors[c]:
        if n in host_of:
            routes[k] = _route_for(state, k, host_of)
    new = PlacementState(
        state.res, state.app, state.order, tuple(host), tuple(routes), tuple(residual),
        state.aval, state.step + 1, state.history, state.clock,
    )
    if __debug__:
        check_conservation(new)
    return new


def residual_score(state: PlacementState, c: int, v: int) -> float:
    """Sum over nonzero-capacity dimensions of residual/capacity after placing c on v."""
    demand = state.app.components[c].demand
    score = 0.0
    for cap, left, need in zip(state.res.nodes[v].capacity, state.residual[v], demand):
        if cap > 0:
            score += (left - need) / cap
    return score


def choose_heuristic(
    state: PlacementState, c: int, kind: str, candidates: Sequence[int], cursor: int = 0
) -> tuple[int | None, int]:
    """Node picked by heuristic ``kind`` for component ``c`` and the next round-robin cursor.

    Returns ``(None, cursor)`` when no candidate is feasible.
    """
    mask = action_mask(state, c, candidates)
    feasible = [v for v, ok in zip(candidates, mask.allowed) if ok]
    if not feasible:
        return None, cursor
    if kind == "first_fit":
        return feasible[0], cursor
    if kind == "best_fit":
        return min(feasible, key=lambda n: (residual_score(state, c, n), n)), cursor
    if kind == "worst_fit":
        return min(feasible, key=lambda n: (-residual_score(state, c, n), n)), cursor
    if kind == "round_robin":
        for off in range(len(candidates)):
            pos = (cursor + off) % len(candidates)
            if mask.allowed[pos]:
                return candidates[pos], (pos + 1) % len(candidates)
    raise ValueError(f"unknown heuristic {kind!r}; expected one of {HEURISTICS}")


def heuristic_place(
    app: ApplicationGraph,
    res: ResourceGraph,
    kind: str,
    seed: int = 0,
    state: PlacementState | None = None,
    nodes: Iterable[int] | None = None,
) -> PlacementState | PlacementFailure:
    """Place ``app`` greedily in placement order with a bin-packing rule.

    first_fit takes the lowest feasible id; best_fit/worst_fit minimize/maximize
    the summed normalized residual left after placement; round_robin takes the
    next feasible node cyclically, starting at position ``seed % len(nodes)``.
    ``state`` continues an earlier placement; ``nodes`` restricts candidates.
    """
    if kind not in HEURISTICS:
        raise ValueError(f"unknown heuristic {kind!r}; expected one of {HEURISTICS}")
    state = initial_state(res, app) if state is None else start_app(state, app)
    candidates = tuple(range(len(res.nodes))) if nodes is None else tuple(sorted(nodes))
    cursor = seed % len(candidates)
    for c in state.order:
        v, cursor = choose_heuristic(state, c, kind, candidates, cursor)
        if v is None:
            return PlacementFailure(c, state)
        state = apply(state, c, v)
    return state


def oracle_optimal(
    app: ApplicationGraph,
    res: ResourceGraph,
    w: MetricWeights | None = None,
    state: PlacementState | None = None,
    nodes: Iterable[int] | None = None,
    limit: int = ORACLE_LIMIT,
) -> tuple[PlacementState, float]:
    """Exhaustive search for the assignment maximizing the objective.

    Assignments are enumerated lexicographically by component id, so the first
    maximizer in that order wins ties.
    """
    w = w or MetricWeights()
    base = initial_state(res, app) if state is None else start_app(state, app)
    candidates = tuple(range(len(res.nodes))) if nodes is None else tuple(sorted(nodes))
    if len(candidates) ** len(app) > limit:
        raise OracleError(f"instance too large: {len(candidates)}^{len(app)} assignments > {limit}")
    best: tuple[PlacementState, float] | None = None
    for assignment in itertools.product(candidates, repeat=len(app)):
        if not all(base.aval[v] for v in assignment):
            continue
        s = base
        try:
            for cid in base.order:
                s = apply(s, cid, assignment[cid])
        except PlacementError:
            continue
        value = cost_report(s, w).objective
        if best is None or value > best[1]:
            best = (s, value)
    if best is None:
        raise OracleError("no feasible assignment")
    return best
