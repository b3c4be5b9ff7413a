"""Scenario files: strict JSON schema, loading and semantic validation."""

from __future__ import annotations

import hashlib
import importlib.resources
import json
import math
import random
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, ValidationError

from ..agents.episodes import Environment
from ..agents.train import TrainConfig
from ..costs import MetricWeights
from ..embedding import FeatureScale
from ..model import (
    AppEdgeSpec,
    ApplicationGraph,
    ComponentSpec,
    Partition,
    PartitionError,
    ResourceGraph,
    ResourceLinkSpec,
    ResourceNodeSpec,
    partition_resources,
    validate_application,
    validate_resources,
)
from .dynamics import DynamicsEvent, ScenarioDynamics

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Scenario could not be loaded; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)


class NodeModel(_Strict):
    id: int
    cpu: float
    gpu: float = 0.0
    ram: float
    stor: float
    pt: float
    speed: float
    aval: bool = True


class LinkModel(_Strict):
    u: int
    v: int
    latency: float
    bandwidth: float


class ResourcesModel(_Strict):
    nodes: list[NodeModel]
    links: list[LinkModel] = []


class ComponentModel(_Strict):
    id: int
    cpu: float
    gpu: float = 0.0
    ram: float
    stor: float
    work: float
    ddl: float


class EdgeModel(_Strict):
    u: int
    v: int
    max_latency: float
    msg_size: float
    min_bandwidth: float


class ApplicationModel(_Strict):
    name: str = "app"
    components: list[ComponentModel]
    edges: list[EdgeModel] = []


class PartitionModel(_Strict):
    n_zones: int = 1
    seed: int = 0


class EventModel(_Strict):
    step: int
    node: int
    aval: bool


class DynamicsModel(_Strict):
    events: list[EventModel] = []
    toggle_rate: float = 0.0


class WeightsModel(_Strict):
    alpha: float = 1.0
    beta: float = 0.01
    gamma: float = 0.02
    local_alpha: float = 1.0
    local_beta: float = 1.0
    local_gamma: float = 1.0
    delta1: float = 1.0
    delta2: float = 1.0
    lambda_g: float = 1.0
    mu: list[float] = []


class TrainModel(_Strict):
    lr: float = 0.01
    discount: float = 1.0
    pretrain_episodes: int = 200
    joint_episodes: int = 300
    batch_size: int = 4
    entropy_coef: float = 0.01
    replay_mix: float = 0.25
    grad_clip: float = 5.0
    seed: int = 0
    replay_capacity: int = 1000
    baseline_decay: float = 0.9


class ScenarioModel(_Strict):
    schema_version: Literal[1]
    name: str
    description: str = ""
    seed: int = 0
    resources: ResourcesModel
    partition: PartitionModel = PartitionModel()
    applications: list[ApplicationModel]
    arrival_order: list[int] | None = None
    masked_node_pct: float = 0.0
    failure_penalty: float = -1.0
    dynamics: DynamicsModel = DynamicsModel()
    weights: WeightsModel = WeightsModel()
    train: TrainModel = TrainModel()


@dataclass(frozen=True)
class Scenario:
    """A validated experiment description."""

    name: str
    res: ResourceGraph
    apps: tuple[ApplicationGraph, ...]
    arrival_order: tuple[int, ...]
    n_zones: int
    partition_seed: int
    masked_node_pct: float
    events: tuple[DynamicsEvent, ...]
    toggle_rate: float
    weights: MetricWeights
    train: TrainConfig
    seed: int
    penalty: float = -1.0
    sha256: str = ""
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def arrivals(self) -> tuple[ApplicationGraph, ...]:
        return tuple(self.apps[i] for i in self.arrival_order)

    @cached_property
    def partition(self) -> Partition:
        return partition_resources(self.res, self.n_zones, self.partition_seed)

    @cached_property
    def scale(self) -> FeatureScale:
        return FeatureScale.from_graphs(self.res, self.apps)

    @cached_property
    def initial_aval(self) -> tuple[bool, ...]:
        """Node flags after reserving ``masked_node_pct`` percent of nodes as unavailable."""
        n = len(self.res.nodes)
        k = int(math.floor(self.masked_node_pct / 100.0 * n + 0.5))
        reserved = set(random.Random(self.seed).sample(range(n), k)) if k else set()
        return tuple(node.aval and node.id not in reserved for node in self.res.nodes)

    @property
    def has_dynamics(self) -> bool:
        return bool(self.events) or self.toggle_rate > 0

    def dynamics(self) -> ScenarioDynamics | None:
        return ScenarioDynamics(self.events, self.toggle_rate) if self.has_dynamics else None

    def environment(self, partition: Partition | None = None, weights: MetricWeights | None = None) -> Environment:
        return Environment(
            self.res,
            self.partition if partition is None else partition,
            self.arrivals,
            self.weights if weights is None else weights,
            self.scale,
            self.initial_aval,
            self.dynamics(),
            self.penalty,
        )

    def metadata(self) -> dict:
        return {"name": self.name, "sha256": self.sha256, "feature_scale": self.scale.as_dict()}


def _errors_from_pydantic(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        if err["type"] == "extra_forbidden":
            out.append(f"{loc}: unknown field '{err['loc'][-1]}'")
        else:
            out.append(f"{loc}: {err['msg']}")
    return out


def build_scenario(data: dict, sha256: str = "") -> Scenario:
    """Validate a parsed scenario document; raises ``ScenarioError`` with every problem."""
    try:
        model = ScenarioModel.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(_errors_from_pydantic(exc)) from None

    errors: list[str] = []
    res = ResourceGraph(
        tuple(ResourceNodeSpec(**n.model_dump()) for n in model.resources.nodes),
        tuple(ResourceLinkSpec(**l.model_dump()) for l in model.resources.links),
    )
    errors += [f"resources: {e}" for e in validate_resources(res)]
    apps = []
    for i, a in enumerate(model.applications):
        app = ApplicationGraph(
            tuple(ComponentSpec(**c.model_dump()) for c in a.components),
            tuple(AppEdgeSpec(**e.model_dump()) for e in a.edges),
            a.name,
        )
        errors += [f"applications.{i}: {e}" for e in validate_application(app)]
        apps.append(app)
    if not apps:
        errors.append("applications: at least one application is required")
    order = tuple(model.arrival_order) if model.arrival_order is not None else tuple(range(len(apps)))
    bad = [i for i in order if not 0 <= i < len(apps)]
    if bad:
        errors.append(f"arrival_order: unknown application indices {bad}")
    if not 0.0 <= model.masked_node_pct <= 100.0:
        errors.append(f"masked_node_pct: must be in [0, 100], got {model.masked_node_pct}")
    if not 1 <= model.partition.n_zones <= max(1, len(res.nodes)):
        errors.append(f"partition.n_zones: must be in [1, {len(res.nodes)}], got {model.partition.n_zones}")
    steps = [e.step for e in model.dynamics.events]
    if any(b < a for a, b in zip(steps, steps[1:])):
        errors.append("dynamics.events: steps must be nondecreasing")
    for i, e in enumerate(model.dynamics.events):
        if e.step < 0:
            errors.append(f"dynamics.events.{i}.step: must be >= 0")
        if not 0 <= e.node < len(res.nodes):
            errors.append(f"dynamics.events.{i}.node: unknown node {e.node}")
    if not 0.0 <= model.dynamics.toggle_rate <= 1.0:
        errors.append("dynamics.toggle_rate: must be in [0, 1]")
    weights = MetricWeights(**model.weights.model_dump())
    errors += [f"weights: {e}" for e in weights.errors(model.partition.n_zones)]
    train = TrainConfig(**model.train.model_dump())
    errors += [f"train: {e}" for e in train.errors()]
    if errors:
        raise ScenarioError(errors)

    scenario = Scenario(
        name=model.name,
        res=res,
        apps=tuple(apps),
        arrival_order=order,
        n_zones=model.partition.n_zones,
        partition_seed=model.partition.seed,
        masked_node_pct=model.masked_node_pct,
        events=tuple(DynamicsEvent(e.step, e.node, e.aval) for e in model.dynamics.events),
        toggle_rate=model.dynamics.toggle_rate,
        weights=weights,
        train=train,
        seed=model.seed,
        penalty=model.failure_penalty,
        sha256=sha256,
        raw=data,
    )
    try:
        scenario.partition
    except PartitionError as exc:
        raise ScenarioError([f"partition: {exc}"]) from None
    return scenario


def load_scenario(path) -> Scenario:
    """Parse and fully validate a scenario file."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise ScenarioError([f"{path}: cannot read ({exc.strerror})"]) from None
    try:
        data = json.loads(blob)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path.name}: line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    if not isinstance(data, dict):
        raise ScenarioError([f"{path.name}: top level must be an object"])
    return build_scenario(data, hashlib.sha256(blob).hexdigest())


def fixture_path(name: str) -> Path:
    """Path of a bundled scenario (``tiny`` or ``small``)."""
    path = Path(str(importlib.resources.files("hiplace") / "fixtures" / f"{name}.json"))
    if not path.is_file():
        raise ScenarioError([f"no bundled fixture named {name!r}"])
    return path


def resolve_scenario_path(arg: str) -> Path:
    """A file path as given, or a bundled fixture when ``arg`` is a bare fixture name."""
    path = Path(arg)
    if path.exists() or path.suffix:
        return path
    return fixture_path(arg)
