"""Acceptance suite: every primary criterion at its stated tolerance and time budget.

Each test records one ``criterion N: PASS|FAIL`` line that is printed in the
terminal summary; the assertion then decides the test outcome.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, CONSERVATION_CHECKS
from instances import random_instance, random_resources, random_rollout
from recompute import cheapest_transfer, recompute

import hiplace.placement as placement
from hiplace.agents import (
    Environment,
    GlobalPolicy,
    LocalPolicy,
    Sample,
    act,
    action_probabilities,
    global_observe,
    gradient_check,
    local_observe,
    pretrain_local,
    run_centralized_episode,
    run_global_episode,
    run_local_episode,
)
from hiplace.costs import MetricWeights, comm_time, cost_report
from hiplace.embedding import encode
from hiplace.harness import build_scenario
from hiplace.harness.cli import main
from hiplace.harness.experiment import PolicySource, run_centralized_rule, run_experiment, train_scenario
from hiplace.model import (
    AppEdgeSpec,
    ApplicationGraph,
    ComponentSpec,
    Partition,
    ResourceGraph,
    ResourceLinkSpec,
    partition_resources,
)
from hiplace.placement import (
    HEURISTICS,
    OracleError,
    PlacementState,
    apply,
    heuristic_place,
    initial_state,
    oracle_optimal,
    route,
)

# Best objective reached by any heuristic (all four kinds, every round-robin
# starting offset) on the bundled ``small`` fixture. Measured once, frozen here,
# and re-derived by ``test_best_heuristic_bound_is_current``.
BEST_HEURISTIC_OBJECTIVE_SMALL = -1.2018715277777776


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def placeable_instances(count: int = 25):
    """The first ``count`` seeded random instances for which a random rollout completes."""
    out, seed = [], 1000
    while len(out) < count:
        app, res = random_instance(seed, max_components=4, max_nodes=5)
        rng = np.random.default_rng(seed)
        for _ in range(20):
            final = random_rollout(app, res, rng)[-1]
            if final.complete:
                out.append((seed, app, res, final))
                break
        seed += 1
    return out


INSTANCES = placeable_instances()


def test_criterion_01_cost_model_matches_recompute():
    worst, checked = 0.0, 0
    with Timer() as t:
        for _, app, res, final in INSTANCES:
            rep = cost_report(final)
            ref = recompute(res, [(app, final.host)], final.aval)
            diffs = [abs(a - b) for a, b in zip(rep.per_component_ct, ref["per_component_ct"])]
            diffs += [abs(rep.ct_app - ref["ct_app"]), abs(rep.ru - ref["ru"]), abs(rep.svr - ref["svr"]),
                      abs(rep.objective - ref["objective"])]
            worst = max(worst, *diffs)
            checked += 1
    ok = checked == 25 and worst <= 1e-9 and t.seconds < 5
    record(1, ok, f"{checked} instances, max abs diff {worst:.3g}, {t.seconds:.2f}s")
    assert ok


def test_criterion_02_heuristics_never_beat_oracle(tiny):
    worst, compared, strict = -np.inf, 0, []
    with Timer() as t:
        for seed, app, res, _ in INSTANCES:
            try:
                _, best = oracle_optimal(app, res)
            except OracleError:
                continue
            values = {}
            for kind in HEURISTICS:
                out = heuristic_place(app, res, kind, seed=seed)
                if isinstance(out, PlacementState):
                    values[kind] = cost_report(out).objective
                    worst = max(worst, values[kind] - best)
                    compared += 1
            if values.get("best_fit", -np.inf) > values.get("first_fit", np.inf):
                strict.append(f"random {seed}")
        ff = cost_report(heuristic_place(tiny.apps[0], tiny.res, "first_fit")).objective
        bf = cost_report(heuristic_place(tiny.apps[0], tiny.res, "best_fit")).objective
        if bf > ff:
            strict.append("tiny fixture")
    ok = compared > 0 and worst <= 1e-9 and "tiny fixture" in strict and t.seconds < 60
    record(2, ok, f"{compared} heuristic runs, max excess over oracle {worst:.3g}; "
                  f"best_fit > first_fit on tiny ({bf:.6f} > {ff:.6f}); {t.seconds:.2f}s")
    assert ok


def test_criterion_03_routing_equals_path_enumeration():
    mismatches, feasible = 0, 0
    with Timer() as t:
        for seed in range(100):
            rng = np.random.default_rng(5000 + seed)
            res = random_resources(rng, int(rng.integers(2, 7)), float(rng.uniform(0, 0.8)))
            aval = tuple(bool(rng.random() > 0.15) for _ in res.nodes)
            edge = AppEdgeSpec(0, 1, float(rng.uniform(1, 40)), float(rng.uniform(0, 60)),
                               float(rng.uniform(1, 150)))
            src, dst = (int(x) for x in rng.integers(0, len(res.nodes), 2))
            state = initial_state(res, ApplicationGraph((ComponentSpec(0, 1, 0, 1, 1, 1, 1),)), aval)
            got = route(state, res, edge, src, dst) if aval[src] and aval[dst] else None
            want = cheapest_transfer(res, aval, edge, src, dst)
            if want is None:
                mismatches += got is not None
            else:
                feasible += 1
                cost = None if got is None else comm_time(edge, [res.links[k] for k in got])
                mismatches += cost is None or abs(cost - want) > 1e-9
    ok = mismatches == 0 and t.seconds < 30
    record(3, ok, f"100 graphs ({feasible} routable), {mismatches} mismatches, {t.seconds:.2f}s")
    assert ok


def test_criterion_04_masked_actions_never_chosen():
    sampled = masked_hits = rejected = 0
    seed = 0
    while sampled < 10_000:
        rng = np.random.default_rng(7000 + seed)
        app, res = random_instance(7000 + seed, max_components=4, max_nodes=6)
        seed += 1
        n_zones = int(rng.integers(1, min(3, len(res.nodes)) + 1))
        try:
            part = partition_resources(res, n_zones, seed)
        except ValueError:
            part = Partition.single(len(res.nodes))
        aval = tuple(bool(rng.random() > 0.2) for _ in res.nodes)
        env = Environment(res, part, (app,), initial_aval=aval)
        policies = [LocalPolicy.init(rng, z) for z in range(part.n_zones)]
        state = env.fresh_state(app)
        while state.next_component is not None and sampled < 10_000:
            observed = [local_observe(env, z, app, state) for z in range(part.n_zones)]
            open_zones = [z for z, o in enumerate(observed) if o.action_mask.any()]
            if not open_zones:
                break
            zone = open_zones[int(rng.integers(len(open_zones)))]
            obs = observed[zone]
            a, logp = act(policies[zone], obs, rng)
            sampled += 1
            if not obs.action_mask[a] or not np.isfinite(logp):
                masked_hits += 1
                break
            try:
                state = apply(state, obs.component, obs.nodes[a])
            except placement.PlacementError:
                rejected += 1
                break
    ok = masked_hits == 0 and rejected == 0
    record(4, ok, f"{sampled} actions on {seed} random instances, {masked_hits} masked chosen, "
                  f"{rejected} rejected by apply")
    assert ok


def _local_batch(env, zone, policy, rng, n):
    out = []
    while len(out) < n:
        app = env.apps[int(rng.integers(len(env.apps)))]
        traj, _ = run_local_episode(env, zone, policy, env.fresh_state(app), rng)
        out += [Sample(s.obs, s.action, float(rng.normal())) for s in traj.decisions()]
    return out[:n]


def _global_batch(env, rng, n):
    out = []
    while len(out) < n:
        app = env.apps[int(rng.integers(len(env.apps)))]
        state = env.fresh_state(app)
        out.append(Sample(global_observe(env, app, state), int(rng.integers(env.n_zones)), float(rng.normal())))
    return out


def test_criterion_05_gradient_check(small):
    env = small.environment()
    errors = []
    with Timer() as t:
        for seed in range(10):
            rng = np.random.default_rng(9000 + seed)
            if seed % 2 == 0:
                policy = LocalPolicy.init(rng, seed % 4 // 2)
                batch = _local_batch(env, policy.zone, policy, rng, 3)
            else:
                policy = GlobalPolicy.init(rng, 2)
                batch = _global_batch(env, rng, 3)
            errors.append(gradient_check(policy, batch))
    worst = max(errors)
    ok = worst < 1e-3 and t.seconds < 60
    record(5, ok, f"10 batches (5 local, 5 global, all parameters), max rel error {worst:.3g}, {t.seconds:.1f}s")
    assert ok


def _relabel(sc, perm):
    """The scenario's resource graph with node ``i`` renamed ``perm[i]``."""
    res = sc.res
    inv = np.argsort(perm)
    nodes = tuple(replace(res.nodes[int(inv[j])], id=j) for j in range(len(res.nodes)))
    links = tuple(ResourceLinkSpec(int(perm[l.u]), int(perm[l.v]), l.latency, l.bandwidth) for l in res.links)
    assignment = [0] * len(nodes)
    for i, z in enumerate(sc.partition.assignment):
        assignment[int(perm[i])] = z
    return ResourceGraph(nodes, links), Partition(tuple(assignment), sc.partition.n_zones)


def test_criterion_06_permutation_invariance(small):
    env = small.environment()
    n = len(small.res.nodes)
    worst = 0.0
    for trial in range(50):
        rng = np.random.default_rng(11_000 + trial)
        perm = rng.permutation(n)
        res2, part2 = _relabel(small, perm)
        aval = tuple(bool(rng.random() > 0.2) for _ in range(n))
        aval2 = tuple(aval[int(i)] for i in np.argsort(perm))
        env1 = Environment(small.res, env.partition, env.apps, scale=small.scale, initial_aval=aval)
        env2 = Environment(res2, part2, env.apps, scale=small.scale, initial_aval=aval2)
        app = env.apps[trial % len(env.apps)]
        s1, s2 = env1.fresh_state(app), env2.fresh_state(app)
        for _ in range(int(rng.integers(0, len(app)))):
            c = s1.next_component
            obs = local_observe(env1, 0, app, s1)
            choices = [v for v, ok in zip(obs.nodes, obs.action_mask) if ok]
            if not choices:
                break
            v = choices[int(rng.integers(len(choices)))]
            s1, s2 = apply(s1, c, v), apply(s2, c, int(perm[v]))
        lp = LocalPolicy.init(rng, 0)
        gp = GlobalPolicy.init(rng, 2)
        for z in range(2):
            o1, o2 = local_observe(env1, z, app, s1), local_observe(env2, z, app, s2)
            p1 = encode(o1.res.x, o1.res.adj, lp.encoder("res"), o1.res.mask).pooled
            p2 = encode(o2.res.x, o2.res.adj, lp.encoder("res"), o2.res.mask).pooled
            worst = max(worst, float(np.max(np.abs(p1 - p2))))
            if o1.action_mask.any():
                pr1, pr2 = action_probabilities(lp, o1), action_probabilities(lp, o2)
                pos2 = {v: k for k, v in enumerate(o2.nodes)}
                remapped = np.array([pr2[pos2[int(perm[v])]] for v in o1.nodes])
                worst = max(worst, float(np.max(np.abs(pr1 - remapped))))
        g1 = gp.embed(global_observe(env1, app, s1))
        g2 = gp.embed(global_observe(env2, app, s2))
        worst = max(worst, float(np.max(np.abs(g1 - g2))))
    ok = worst <= 1e-12
    record(6, ok, f"50 relabelings of the small fixture, max deviation {worst:.3g} "
                  "(zone pooled embeddings, local action probabilities, global observation vector)")
    assert ok


def test_criterion_07_hierarchy_reduces_to_centralized(tiny):
    sc = build_scenario({**tiny.raw, "partition": {"n_zones": 1, "seed": 0},
                         "weights": {**tiny.raw.get("weights", {}), "lambda_g": 0.0, "mu": [1.0]}})
    env = sc.environment()
    assert sc.weights == MetricWeights(lambda_g=0.0, mu=(1.0,))
    trained = pretrain_local(env, 0, replace(sc.train, pretrain_episodes=30, seed=1)).policy
    mismatches, runs = 0, 0
    for policy in (LocalPolicy.init(np.random.default_rng(3), 0), trained):
        gp = GlobalPolicy.init(np.random.default_rng(4), 1)
        for seed in range(10):
            for greedy in (False, True):
                hier = run_global_episode(env, gp, [policy], np.random.default_rng(seed), greedy)
                trajs, state = run_centralized_episode(env, policy, np.random.default_rng(seed), greedy)
                same = (
                    hier.state == state
                    and hier.reward == trajs[-1].ret
                    and [s.action for s in hier.local_trajs[0].steps] == [s.action for s in trajs[0].steps]
                    and [s.logp for s in hier.local_trajs[0].steps] == [s.logp for s in trajs[0].steps]
                    and [s.logp for s in hier.global_traj.steps] == [0.0]
                )
                mismatches += not same
                runs += 1
    ok = mismatches == 0
    record(7, ok, f"{runs} episodes (untrained and pretrained policy, sampled and greedy), "
                  f"{mismatches} differ from the centralized pipeline")
    assert ok


def _zone_svr(env, zone, policy, rng, greedy, episodes):
    values = []
    for _ in range(episodes):
        for app in env.apps:
            _, state = run_local_episode(env, zone, policy, env.fresh_state(app), rng, greedy)
            values.append(cost_report(state).svr)
    return float(np.mean(values))


def test_criterion_08_pretraining_makes_progress(small):
    env = small.environment()
    config = replace(small.train, seed=42, pretrain_episodes=200)
    details, ok = [], True
    with Timer() as t:
        for zone in range(env.n_zones):
            result = pretrain_local(env, zone, config)
            first, last = np.mean(result.rewards[:20]), np.mean(result.rewards[-20:])
            greedy_svr = _zone_svr(env, zone, result.policy, np.random.default_rng(0), True, 1)
            uniform = LocalPolicy({k: np.zeros_like(v) for k, v in result.policy.params.items()}, zone)
            random_svr = _zone_svr(env, zone, uniform, np.random.default_rng([42, zone]), False, 100)
            ok &= bool(last > first) and greedy_svr <= random_svr
            details.append(f"zone {zone}: reward {first:.3f} -> {last:.3f}, "
                           f"greedy SVR {greedy_svr:.1f} vs random {random_svr:.1f}")
    ok &= t.seconds < 600
    record(8, ok, "; ".join(details) + f"; {t.seconds:.1f}s")
    assert ok


def test_best_heuristic_bound_is_current(small):
    env = small.environment()
    values = []
    for kind in HEURISTICS:
        for offset in range(len(small.res.nodes)):
            state, failures = run_centralized_rule(env, kind, np.random.default_rng(0), offset)
            if failures == 0:
                values.append(cost_report(state, env.weights).objective)
    assert max(values) == BEST_HEURISTIC_OBJECTIVE_SMALL


def test_criterion_09_joint_training_beats_heuristics(small):
    with Timer() as t:
        run = train_scenario(small, seed=7, joint_episodes=300)
        source = PolicySource("checkpoint", "trained", run.global_policy, tuple(run.local_policies), greedy=True)
        report = run_experiment(small, source, 1, small.seed)
    objective = report.episodes[0]["objective"]
    ok = report.episodes[0]["failures"] == 0 and objective >= BEST_HEURISTIC_OBJECTIVE_SMALL and t.seconds < 1200
    record(9, ok, f"greedy objective {objective:.6f} vs best heuristic {BEST_HEURISTIC_OBJECTIVE_SMALL:.6f} "
                  f"after {run.config.pretrain_episodes} pretraining + {run.config.joint_episodes} joint "
                  f"episodes, {t.seconds:.1f}s")
    assert ok


def test_criterion_10_cli_reproducible(tmp_path, capsys):
    small_path, tiny_path = "small", "tiny"
    commands = {
        "validate": ["validate", small_path],
        "partition": ["partition", small_path],
        "baseline": ["baseline", small_path, "--kind", "random", "--episodes", "3", "--format", "csv"],
        "pretrain": ["pretrain", small_path, "--zone", "0", "--episodes", "10", "--format", "csv"],
        "train": ["train", small_path, "--pretrain-episodes", "8", "--joint-episodes", "6", "--format", "csv"],
        "oracle": ["oracle", tiny_path],
    }
    differing = []
    outputs = {}
    for name, argv in commands.items():
        runs = []
        for i in range(2):
            out = tmp_path / f"{name}{i}"
            assert main([*argv, "--out", str(out)]) == 0
            runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        outputs[name] = tmp_path / f"{name}0"
        if runs[0] != runs[1]:
            differing.append(name)
    checkpoint = str(outputs["train"] / "checkpoint.json")
    extra = {
        "eval": ["eval", small_path, "--checkpoint", checkpoint, "--episodes", "3", "--format", "csv"],
        "compare": ["compare", str(outputs["baseline"] / "report.json"), None],
    }
    eval_runs = []
    for i in range(2):
        out = tmp_path / f"eval{i}"
        assert main([*extra["eval"], "--out", str(out)]) == 0
        eval_runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    if eval_runs[0] != eval_runs[1]:
        differing.append("eval")
    compare_runs = []
    for i in range(2):
        out = tmp_path / f"compare{i}"
        argv = ["compare", str(outputs["baseline"] / "report.json"), str(tmp_path / "eval0" / "report.json")]
        assert main([*argv, "--out", str(out)]) == 0
        compare_runs.append((out / "comparison.json").read_bytes())
    if compare_runs[0] != compare_runs[1]:
        differing.append("compare")
    capsys.readouterr()
    ok = not differing
    record(10, ok, "8 subcommands run twice with identical scenario and seed; "
                   + ("all outputs byte-identical" if ok else f"differing: {differing}"))
    assert ok


def test_criterion_11_conservation_everywhere(small):
    # re-check every state of a batch of rollouts directly as well
    direct = 0
    for seed in range(30):
        app, res = random_instance(13_000 + seed)
        for state in random_rollout(app, res, np.random.default_rng(seed)):
            placement.check_conservation(state)
            direct += 1
    env = small.environment()
    state = env.fresh_state(env.apps[0])
    state = apply(state, 0, 4)
    corrupted = replace(state, residual=(state.residual[0],) * len(state.residual))
    caught = False
    try:
        apply(corrupted, 1, 2)
    except AssertionError:
        caught = True
    count = CONSERVATION_CHECKS["count"]
    ok = caught and count > 0
    record(11, ok, f"{count} conservation checks passed across the session "
                   f"(incl. {direct} direct); corrupted state {'rejected' if caught else 'NOT rejected'}")
    assert ok
