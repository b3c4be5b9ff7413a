"""Observations and episode rollouts for local, global and centralized placement."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from ..costs import MetricWeights, cost_report, global_reward, local_reward, non_local_reward
from ..embedding import FeatureScale, adjacency, featurize_application, featurize_resources
from ..model import ApplicationGraph, Partition, ResourceGraph, induced_subgraph
from ..placement import PlacementState, action_mask, apply, initial_state, start_app
from .policy import GlobalObservation, GlobalPolicy, GraphInput, LocalObservation, LocalPolicy, act
from .replay import Step, Trajectory

DynamicsHook = Callable[[PlacementState, np.random.Generator], PlacementState]


@dataclass(frozen=True)
class Environment:
    """Everything an episode needs: graphs, zones, workload, weights, dynamics."""

    res: ResourceGraph
    partition: Partition
    apps: tuple[ApplicationGraph, ...]
    weights: MetricWeights = field(default_factory=MetricWeights)
    scale: FeatureScale | None = None
    initial_aval: tuple[bool, ...] | None = None
    dynamics: DynamicsHook | None = None
    penalty: float = -1.0

    def __post_init__(self):
        object.__setattr__(self, "apps", tuple(self.apps))
        if self.scale is None:
            object.__setattr__(self, "scale", FeatureScale.from_graphs(self.res, self.apps))
        if self.initial_aval is None:
            object.__setattr__(self, "initial_aval", tuple(n.aval for n in self.res.nodes))

    @property
    def n_zones(self) -> int:
        return self.partition.n_zones

    @cached_property
    def zones(self) -> list[ResourceGraph]:
        return [induced_subgraph(self.res, self.partition, z) for z in range(self.n_zones)]

    @cached_property
    def zone_adjacency(self) -> list[np.ndarray]:
        return [adjacency(z) for z in self.zones]

    @cached_property
    def app_adjacency(self) -> dict[int, np.ndarray]:
        return {id(a): adjacency(a) for a in self.apps}

    def app_adj(self, app: ApplicationGraph) -> np.ndarray:
        adj = self.app_adjacency.get(id(app))
        return adj if adj is not None else adjacency(app)

    def fresh_state(self, app: ApplicationGraph) -> PlacementState:
        return initial_state(self.res, app, self.initial_aval)

    def advance(self, state: PlacementState, rng: np.random.Generator) -> PlacementState:
        return state if self.dynamics is None else self.dynamics(state, rng)


def _zone_input(env: Environment, zone: int, state: PlacementState) -> GraphInput:
    graph = env.zones[zone]
    x = featurize_resources(graph, state, env.scale)
    return GraphInput(x, env.zone_adjacency[zone], x[:, -1].copy())


def local_observe(env: Environment, zone: int, app: ApplicationGraph, state: PlacementState) -> LocalObservation:
    """Application features plus the zone's resource features and action mask."""
    c = state.next_component
    nodes = env.zones[zone].global_ids
    mask = np.array(action_mask(state, c, nodes).allowed if c is not None else [False] * len(nodes))
    return LocalObservation(
        GraphInput(featurize_application(app, state, env.scale), env.app_adj(app)),
        _zone_input(env, zone, state),
        -1 if c is None else c,
        mask,
        nodes,
    )


def global_observe(env: Environment, app: ApplicationGraph, state: PlacementState) -> GlobalObservation:
    """Application features plus every zone's resource features; all zones selectable."""
    return GlobalObservation(
        GraphInput(featurize_application(app, state, env.scale), env.app_adj(app)),
        tuple(_zone_input(env, z, state) for z in range(env.n_zones)),
        np.ones(env.n_zones, dtype=bool),
    )


def zone_reward(env: Environment, state: PlacementState, zone: int) -> float:
    report = cost_report(state, env.weights, env.zones[zone].global_ids)
    return local_reward(report, env.weights)


def run_local_episode(
    env: Environment,
    zone: int,
    policy: LocalPolicy,
    state: PlacementState,
    rng: np.random.Generator,
    greedy: bool = False,
) -> tuple[Trajectory, PlacementState]:
    """Place ``state.app`` component by component inside ``zone``.

    The terminal step carries the zone reward, or ``env.penalty`` when some
    component has no feasible node (that step has ``action=None``).
    """
    traj = Trajectory(zone=zone)
    app = state.app
    while state.next_component is not None:
        state = env.advance(state, rng)
        obs = local_observe(env, zone, app, state)
        if not obs.action_mask.any():
            traj.steps.append(Step(obs, None, 0.0))
            traj.failed = True
            break
        a, logp = act(policy, obs, rng, greedy=greedy)
        state = apply(state, obs.component, obs.nodes[a])
        traj.steps.append(Step(obs, a, logp))
    if traj.steps:
        traj.steps[-1].reward = env.penalty if traj.failed else zone_reward(env, state, zone)
    return traj, state


def episode_reward(
    env: Environment, state: PlacementState, failed_zones: set[int] = frozenset(), any_failure: bool = False
) -> tuple[float, list[float]]:
    """Combined reward of a finished episode and the per-zone local rewards.

    A zone whose placement failed contributes ``env.penalty``; any failure
    replaces the non-local term by the penalty too.
    """
    zone_rewards = [
        env.penalty if z in failed_zones else zone_reward(env, state, z) for z in range(env.n_zones)
    ]
    if any_failure:
        nl = env.penalty
    else:
        nl = non_local_reward(cost_report(state, env.weights), env.weights)
    return global_reward(nl, zone_rewards, env.weights), zone_rewards


@dataclass
class GlobalEpisode:
    global_traj: Trajectory
    local_trajs: list[Trajectory]
    state: PlacementState
    reward: float
    local_rewards: list[float]
    failures: int


def run_global_episode(
    env: Environment,
    global_policy: GlobalPolicy,
    local_policies: Sequence[LocalPolicy],
    rng: np.random.Generator,
    greedy: bool = False,
    apps: Sequence[ApplicationGraph] | None = None,
) -> GlobalEpisode:
    """Delegate each arriving application to one zone, then let that zone place it.

    The terminal global reward is ``episode_reward`` of the final state.
    """
    apps = env.apps if apps is None else tuple(apps)
    gtraj = Trajectory()
    locals_: list[Trajectory] = []
    failed_zones: set[int] = set()
    state: PlacementState | None = None
    for app in apps:
        state = env.fresh_state(app) if state is None else start_app(state, app)
        gobs = global_observe(env, app, state)
        k, logp = act(global_policy, gobs, rng, greedy=greedy)
        gtraj.steps.append(Step(gobs, k, logp))
        traj, state = run_local_episode(env, k, local_policies[k], state, rng, greedy=greedy)
        locals_.append(traj)
        if traj.failed:
            failed_zones.add(k)
    reward, zone_rewards = episode_reward(env, state, failed_zones, bool(failed_zones))
    gtraj.steps[-1].reward = reward
    gtraj.failed = bool(failed_zones)
    return GlobalEpisode(gtraj, locals_, state, reward, zone_rewards, sum(t.failed for t in locals_))


def run_centralized_episode(
    env: Environment,
    policy: LocalPolicy,
    rng: np.random.Generator,
    greedy: bool = False,
    apps: Sequence[ApplicationGraph] | None = None,
) -> tuple[list[Trajectory], PlacementState]:
    """Single agent with full observability placing every application in turn."""
    central = Environment(
        env.res, Partition.single(len(env.res.nodes)), env.apps, env.weights, env.scale,
        env.initial_aval, env.dynamics, env.penalty,
    )
    apps = env.apps if apps is None else tuple(apps)
    trajs = []
    state: PlacementState | None = None
    for app in apps:
        state = central.fresh_state(app) if state is None else start_app(state, app)
        traj, state = run_local_episode(central, 0, policy, state, rng, greedy=greedy)
        trajs.append(traj)
    return trajs, state
