"""Completion time, utilization, SLA violation, objective and reward functions.

All functions are pure. Times are milliseconds, SVR is a percentage.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Sequence

from .model import AppEdgeSpec, ApplicationGraph, ComponentSpec, ResourceGraph, ResourceLinkSpec, ResourceNodeSpec

if TYPE_CHECKING:
    from .placement import PlacementState


class IncompletePlacement(ValueError):
    pass


@dataclass(frozen=True)
class MetricWeights:
    """Weights of the objective and of the local/non-local/global rewards.

    ``alpha``/``beta``/``gamma`` weight the objective; ``local_alpha`` etc. weight
    the local reward. An empty ``mu`` means uniform 1/N_local.
    """

    alpha: float = 1.0
    beta: float = 0.01
    gamma: float = 0.02
    local_alpha: float = 1.0
    local_beta: float = 1.0
    local_gamma: float = 1.0
    delta1: float = 1.0
    delta2: float = 1.0
    lambda_g: float = 1.0
    mu: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))

    def zone_weights(self, n_zones: int) -> tuple[float, ...]:
        if not self.mu:
            return tuple([1.0 / n_zones] * n_zones)
        if len(self.mu) != n_zones:
            raise ValueError(f"mu has {len(self.mu)} entries, expected {n_zones}")
        return self.mu

    def errors(self, n_zones: int | None = None) -> list[str]:
        errs = []
        for name in ("alpha", "beta", "gamma", "local_alpha", "local_beta", "local_gamma", "delta1", "delta2", "lambda_g"):
            if getattr(self, name) < 0:
                errs.append(f"weight {name} must be >= 0")
        if any(m < 0 for m in self.mu):
            errs.append("weights mu must be >= 0")
        if n_zones is not None and self.mu and len(self.mu) != n_zones:
            errs.append(f"mu has {len(self.mu)} entries, expected N_local={n_zones}")
        return errs


@dataclass(frozen=True)
class CostReport:
    per_component_ct: tuple[float, ...]
    ct_app: float
    ru: float
    svr: float
    objective: float = 0.0
    n_components: int = 0
    violations: int = 0
    per_component_ddl: tuple[float, ...] = field(default=(), repr=False)


def comp_time(c: ComponentSpec, v: ResourceNodeSpec) -> float:
    """Computation time of ``c`` on ``v``: response time plus work / speed."""
    return v.pt + c.work / v.speed


def comm_time(edge: AppEdgeSpec, path: Sequence[ResourceLinkSpec]) -> float:
    """Transfer time of ``edge``'s message along ``path``; 0 for co-location."""
    total = 0.0
    for link in path:
        total += link.latency + edge.msg_size / link.bandwidth
    return total


def charged_edges(app: ApplicationGraph, cid: int) -> list[int]:
    """Edges whose transfer time is charged to ``cid`` (the larger endpoint id)."""
    return [k for _, k in app.neighbors[cid] if app.edges[k].key[1] == cid]


def _component_ct(
    res: ResourceGraph,
    app: ApplicationGraph,
    host: Sequence[int | None],
    routes: Sequence[tuple[int, ...] | None],
    cid: int,
) -> float:
    ct = comp_time(app.components[cid], res.nodes[host[cid]])
    for k in charged_edges(app, cid):
        path = routes[k]
        if path is not None:
            ct += comm_time(app.edges[k], [res.links[i] for i in path])
    return ct


def completion_time_component(state: PlacementState, c: int) -> float:
    if state.host[c] is None:
        raise IncompletePlacement(f"component {c} is not placed")
    return _component_ct(state.res, state.app, state.host, state.routes, c)


def _require_complete(state: PlacementState) -> None:
    missing = [i for i, h in enumerate(state.host) if h is None]
    if missing:
        raise IncompletePlacement(f"components {missing} are not placed")


def completion_time_app(state: PlacementState) -> float:
    """Sequential-workflow completion time: sum of per-component times."""
    _require_complete(state)
    return sum(completion_time_component(state, c) for c in range(len(state.app)))


def node_utilization(capacity: Sequence[float], residual: Sequence[float]) -> float:
    """Mean used/total over dimensions with nonzero capacity; 0 if none."""
    fracs = [(cap - r) / cap for cap, r in zip(capacity, residual) if cap > 0]
    if not fracs:
        return 0.0
    return sum(fracs) / len(fracs)


def resource_utilization(state: PlacementState, nodes: Iterable[int] | None = None) -> float:
    """Average utilization over available nodes (optionally a node subset)."""
    ids = range(len(state.res.nodes)) if nodes is None else sorted(nodes)
    avail = [i for i in ids if state.aval[i]]
    if not avail:
        return 0.0
    total = 0.0
    for i in avail:
        total += node_utilization(state.res.nodes[i].capacity, state.residual[i])
    return total / len(avail)


def sla_violation_rate(state: PlacementState) -> float:
    _require_complete(state)
    n = len(state.app)
    missed = sum(
        1 for c in state.app.components if completion_time_component(state, c.id) > c.ddl
    )
    return 100.0 * missed / n


def objective(report: CostReport, w: MetricWeights) -> float:
    return w.alpha * report.ru - w.beta * report.ct_app - w.gamma * report.svr


def cost_report(
    state: PlacementState,
    w: MetricWeights | None = None,
    nodes: Iterable[int] | None = None,
    require_complete: bool = False,
) -> CostReport:
    """Metrics over every placed component of every application in ``state``.

    With ``nodes`` given, only components hosted on those nodes count and RU is
    averaged over those nodes; this is the zone-local view.
    """
    w = w or MetricWeights()
    if require_complete:
        _require_complete(state)
    node_set = None if nodes is None else set(nodes)
    cts: list[float] = []
    ddls: list[float] = []
    for placed in state.all_apps():
        for c in placed.app.components:
            h = placed.host[c.id]
            if h is None or (node_set is not None and h not in node_set):
                continue
            cts.append(_component_ct(state.res, placed.app, placed.host, placed.routes, c.id))
            ddls.append(c.ddl)
    ct_app = sum(cts)
    violations = sum(1 for ct, d in zip(cts, ddls) if ct > d)
    svr = 100.0 * violations / len(cts) if cts else 0.0
    ru = resource_utilization(state, node_set)
    partial = CostReport(tuple(cts), ct_app, ru, svr, 0.0, len(cts), violations, tuple(ddls))
    return replace(partial, objective=objective(partial, w))


def local_reward(zone_report: CostReport, w: MetricWeights) -> float:
    """Zone reward with smoothed reciprocals 1/(1+x) for time and violation rate."""
    return (
        w.local_alpha * zone_report.ru
        + w.local_beta * (1.0 / (1.0 + zone_report.ct_app))
        + w.local_gamma * (1.0 / (1.0 + zone_report.svr))
    )


def non_local_reward(global_report: CostReport, w: MetricWeights) -> float:
    return w.delta1 * (1.0 / (1.0 + global_report.svr)) + w.delta2 * (1.0 / (1.0 + global_report.ct_app))


def global_reward(non_local: float, locals_: Sequence[float], w: MetricWeights) -> float:
    mu = w.zone_weights(len(locals_))
    total = w.lambda_g * non_local
    for m, r in zip(mu, locals_):
        total += m * r
    return total
