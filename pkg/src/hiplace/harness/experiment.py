"""Episode orchestration, metric collection, run reports and report comparison."""

from __future__ import annotations

import csv
import json
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import __version__
from ..agents.checkpoint import CheckpointError, load_checkpoint
from ..agents.episodes import Environment, episode_reward, run_centralized_episode, run_global_episode
from ..agents.policy import GlobalPolicy, LocalPolicy
from ..agents.train import JointResult, PretrainResult, TrainConfig, joint_train, pretrain_local
from ..costs import cost_report
from ..placement import (
    HEURISTICS,
    ORACLE_LIMIT,
    OracleError,
    PlacementState,
    action_mask,
    apply,
    choose_heuristic,
    oracle_optimal,
    start_app,
)
from .scenario import Scenario

TOOL = "hiplace"
METRICS = ("objective", "ru", "ct_app", "svr", "reward", "failures", "memory_bytes", "wall_time", "optimality_gap")


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class PolicySource:
    """What chooses nodes: a heuristic, uniform random, or trained policies."""

    kind: str  # heuristic name, "random" or "checkpoint"
    label: str
    global_policy: GlobalPolicy | None = None
    local_policies: tuple[LocalPolicy, ...] = ()
    greedy: bool = False

    @property
    def memory_bytes(self) -> int:
        pols = list(self.local_policies) + ([self.global_policy] if self.global_policy is not None else [])
        return sum(p.nbytes() for p in pols)


def resolve_source(scenario: Scenario, source, greedy: bool = False) -> PolicySource:
    """Turn a heuristic name, ``"random"``, a checkpoint path or a PolicySource into a PolicySource."""
    if isinstance(source, PolicySource):
        return source
    source = str(source)
    if source in HEURISTICS or source == "random":
        return PolicySource(source, source)
    path = Path(source)
    if not path.is_file():
        raise ExperimentError(f"unknown policy source {source!r}: not a heuristic ({', '.join(HEURISTICS)}), "
                              "'random', or an existing checkpoint file")
    try:
        gpol, lpols, _ = load_checkpoint(path, n_zones=scenario.n_zones)
    except CheckpointError as exc:
        raise ExperimentError(f"checkpoint/scenario mismatch: {exc}") from exc
    if gpol is None and len(lpols) != 1:
        raise ExperimentError(f"checkpoint {path.name} has no global policy and {len(lpols)} local policies")
    return PolicySource("checkpoint", f"checkpoint:{path.name}", gpol, tuple(lpols), greedy)


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, episode]))


def run_centralized_rule(
    env: Environment, kind: str, rng: np.random.Generator, seed: int = 0
) -> tuple[PlacementState, int]:
    """Place every arriving application with a heuristic or uniformly at random.

    An application whose next component has no feasible node is abandoned
    (its placed components stay); the run continues with the next arrival.
    Returns the final state and the number of abandoned applications.
    """
    candidates = tuple(range(len(env.res.nodes)))
    cursor = seed % len(candidates)
    failures = 0
    state: PlacementState | None = None
    for app in env.apps:
        state = env.fresh_state(app) if state is None else start_app(state, app)
        while (c := state.next_component) is not None:
            state = env.advance(state, rng)
            if kind == "random":
                mask = action_mask(state, c)
                feasible = [v for v, ok in zip(mask.nodes, mask.allowed) if ok]
                v = feasible[int(rng.integers(len(feasible)))] if feasible else None
            else:
                v, cursor = choose_heuristic(state, c, kind, candidates, cursor)
            if v is None:
                failures += 1
                break
            state = apply(state, c, v)
    return state, failures


def oracle_bound(scenario: Scenario, env: Environment) -> float | None:
    """Optimal objective for single-application static scenarios, else None."""
    if len(env.apps) != 1 or scenario.has_dynamics:
        return None
    nodes = [v for v, ok in enumerate(env.initial_aval) if ok]
    if not nodes or len(nodes) ** len(env.apps[0]) > ORACLE_LIMIT:
        return None
    try:
        _, value = oracle_optimal(env.apps[0], env.res, env.weights, nodes=nodes)
    except OracleError:
        return None
    return value


def run_episode(
    scenario: Scenario, source: PolicySource, seed: int, episode: int,
    timing: bool = False, oracle: float | None = None,
) -> dict:
    """One evaluation episode; returns its metric record."""
    env = scenario.environment()
    rng = episode_rng(seed, episode)
    t0 = time.perf_counter()
    memory = source.memory_bytes
    if source.kind == "checkpoint":
        if source.global_policy is not None:
            ep = run_global_episode(env, source.global_policy, source.local_policies, rng, greedy=source.greedy)
            state, failures, reward = ep.state, ep.failures, ep.reward
            memory += ep.global_traj.nbytes + sum(t.nbytes for t in ep.local_trajs)
        else:
            trajs, state = run_centralized_episode(env, source.local_policies[0], rng, greedy=source.greedy)
            failures = sum(t.failed for t in trajs)
            reward, _ = episode_reward(env, state, set(), failures > 0)
            memory += sum(t.nbytes for t in trajs)
    else:
        state, failures = run_centralized_rule(env, source.kind, rng, seed)
        reward, _ = episode_reward(env, state, set(), failures > 0)
    wall = time.perf_counter() - t0
    report = cost_report(state, env.weights)
    gap = None
    if oracle is not None and failures == 0:
        gap = oracle - report.objective
    return {
        "episode": episode,
        "objective": report.objective,
        "ru": report.ru,
        "ct_app": report.ct_app,
        "svr": report.svr,
        "reward": reward,
        "failures": failures,
        "placed": report.n_components,
        "memory_bytes": memory,
        "wall_time": wall if timing else None,
        "optimality_gap": gap,
    }


def _episode_job(args) -> dict:
    return run_episode(*args)


def summarize(episodes: Sequence[dict], metrics: Sequence[str] = METRICS) -> dict:
    out = {}
    for m in metrics:
        vals = [float(e[m]) for e in episodes if e.get(m) is not None]
        if not vals:
            out[m] = None
            continue
        out[m] = {
            "mean": statistics.fmean(vals),
            "sd": statistics.stdev(vals) if len(vals) > 1 else 0.0,
            "n": len(vals),
        }
    return out


@dataclass
class RunReport:
    scenario: dict
    source: str
    seed: int
    config: dict
    episodes: list[dict] = field(default_factory=list)
    oracle_objective: float | None = None
    tool: str = TOOL
    version: str = __version__

    @property
    def summary(self) -> dict:
        return summarize(self.episodes)

    def stream(self, metric: str) -> list:
        return [e[metric] for e in self.episodes]

    def to_dict(self) -> dict:
        return {
            "tool": self.tool,
            "version": self.version,
            "scenario": self.scenario,
            "source": self.source,
            "seed": self.seed,
            "config": self.config,
            "oracle_objective": self.oracle_objective,
            "summary": self.summary,
            "episodes": self.episodes,
        }


def run_experiment(
    scenario: Scenario,
    source,
    episodes: int,
    seed: int,
    workers: int = 1,
    timing: bool = False,
    greedy: bool = False,
) -> RunReport:
    """Evaluate a policy source for ``episodes`` episodes.

    Episode ``e`` uses its own generator seeded from ``(seed, e)``, so results
    do not depend on ``workers``. Wall-clock times are recorded only with
    ``timing=True``; everything else is deterministic.
    """
    if episodes < 1:
        raise ExperimentError("episodes must be >= 1")
    src = resolve_source(scenario, source, greedy)
    oracle = oracle_bound(scenario, scenario.environment())
    jobs = [(scenario, src, seed, e, timing, oracle) for e in range(episodes)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_episode_job, jobs))
    else:
        records = [_episode_job(j) for j in jobs]
    config = {
        "source": src.label,
        "episodes": episodes,
        "seed": seed,
        "greedy": src.greedy,
        "timing": timing,
        "scenario": scenario.raw,
    }
    return RunReport(
        {"name": scenario.name, "sha256": scenario.sha256}, src.label, seed, config, records, oracle,
    )


@dataclass
class TrainingRun:
    config: TrainConfig
    global_policy: GlobalPolicy
    local_policies: list[LocalPolicy]
    pretrain: list[PretrainResult]
    joint: JointResult | None
    memory_bytes: int
    wall_time: float | None = None

    def to_dict(self, scenario: Scenario) -> dict:
        return {
            "tool": TOOL,
            "version": __version__,
            "scenario": {"name": scenario.name, "sha256": scenario.sha256},
            "seed": self.config.seed,
            "config": self.config.as_dict(),
            "memory_bytes": self.memory_bytes,
            "wall_time": self.wall_time,
            "pretrain_rewards": [p.rewards for p in self.pretrain],
            "joint_global_rewards": self.joint.global_rewards if self.joint else [],
            "joint_local_rewards": self.joint.local_rewards if self.joint else [],
            "replayed": self.joint.replayed if self.joint else 0,
        }


def training_memory(policies, replays) -> int:
    """Parameters, two Adam moment buffers per parameter, and replayed observations."""
    return sum(3 * p.nbytes() for p in policies) + sum(r.nbytes for r in replays)


def train_scenario(
    scenario: Scenario,
    seed: int | None = None,
    pretrain_episodes: int | None = None,
    joint_episodes: int | None = None,
    timing: bool = False,
) -> TrainingRun:
    """Pretrain every zone's local policy, then train global and locals jointly."""
    overrides = {"seed": seed, "pretrain_episodes": pretrain_episodes, "joint_episodes": joint_episodes}
    config = replace(scenario.train, **{k: v for k, v in overrides.items() if v is not None})
    env = scenario.environment()
    t0 = time.perf_counter()
    pre = [pretrain_local(env, z, config) for z in range(env.n_zones)]
    locals_ = [p.policy for p in pre]
    gpol = GlobalPolicy.init(np.random.default_rng([config.seed, 2000]), env.n_zones)
    joint = None
    if config.joint_episodes > 0:
        joint = joint_train(env, gpol, locals_, [p.replay for p in pre], config)
    wall = time.perf_counter() - t0
    memory = training_memory([gpol] + locals_, [p.replay for p in pre])
    return TrainingRun(config, gpol, locals_, pre, joint, memory, wall if timing else None)


def compare(reports: Sequence) -> dict:
    """Align reports over the same scenario and seed: mean, sd and delta to the first."""
    dicts = [r.to_dict() if isinstance(r, RunReport) else r for r in reports]
    if len(dicts) < 2:
        raise ExperimentError("compare needs at least two reports")
    ref = dicts[0]
    for d in dicts[1:]:
        if d["scenario"]["sha256"] != ref["scenario"]["sha256"] or d["scenario"]["name"] != ref["scenario"]["name"]:
            raise ExperimentError(
                f"mismatched scenarios: {ref['scenario']['name']} vs {d['scenario']['name']}"
            )
        if d["seed"] != ref["seed"] or len(d["episodes"]) != len(ref["episodes"]):
            raise ExperimentError("reports differ in seed or episode count")
    ref_summary = summarize(ref["episodes"])
    rows = []
    for d in dicts:
        summary = summarize(d["episodes"])
        metrics = {}
        for m in METRICS:
            s, r = summary[m], ref_summary[m]
            if s is None:
                metrics[m] = None
                continue
            delta = s["mean"] - r["mean"] if r is not None else None
            metrics[m] = {"mean": s["mean"], "sd": s["sd"], "delta": delta}
        rows.append({"source": d["source"], "metrics": metrics})
    return {
        "scenario": ref["scenario"],
        "seed": ref["seed"],
        "baseline": ref["source"],
        "oracle_objective": ref.get("oracle_objective"),
        "rows": rows,
    }


def format_float(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
    Path(path).write_text(text + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_streams(out_dir, streams: dict[str, Sequence]) -> list[Path]:
    """One two-column CSV (``episode,value``) per metric stream."""
    paths = []
    for name, values in streams.items():
        path = Path(out_dir) / f"{name}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["episode", "value"])
            for i, v in enumerate(values):
                w.writerow([i, format_float(v)])
        paths.append(path)
    return paths


def write_report(report: RunReport, out_dir, fmt: str = "json") -> list[Path]:
    """Write ``report.json``; with ``fmt='csv'`` also one CSV per metric stream."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.json"]
    write_json(paths[0], report.to_dict())
    if fmt == "csv":
        paths += write_streams(out, {m: report.stream(m) for m in METRICS})
    return paths


def load_report(path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("tool") != TOOL or "episodes" not in data:
        raise ExperimentError(f"{path}: not a run report")
    return data
