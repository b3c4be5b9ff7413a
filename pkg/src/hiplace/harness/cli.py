"""Command-line interface: ``hiplace <subcommand> ...``.

Every subcommand prints machine-readable JSON (or CSV with ``--format csv``)
and exits 0 on success. Failures print ``{"ok": false, ...}`` on stderr and
exit nonzero (2 for invalid input, 1 otherwise).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from .. import __version__
from ..agents.checkpoint import CheckpointError, save_checkpoint
from ..agents.train import TrainingDiverged, pretrain_local
from ..costs import cost_report
from ..model import check_partition, partition_resources
from ..placement import HEURISTICS, OracleError, oracle_optimal
from .experiment import (
    METRICS,
    ExperimentError,
    compare,
    format_float,
    load_report,
    run_experiment,
    train_scenario,
    training_memory,
    write_json,
    write_report,
    write_streams,
)
from .scenario import ScenarioError, load_scenario as _load, resolve_scenario_path


def load_scenario(arg: str):
    return _load(resolve_scenario_path(arg))


def _emit(obj, args, out_name: str = "result.json") -> None:
    """Print ``obj`` as JSON, or write it under ``--out`` and print the file list."""
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / out_name, obj)
        print(json.dumps({"ok": True, "files": [str(out / out_name)]}, indent=2))
    else:
        print(json.dumps(obj, indent=2, sort_keys=True))


def _episode_table(episodes: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["episode", "placed", *METRICS]
    w.writerow(cols)
    for e in episodes:
        w.writerow([format_float(e.get(c)) for c in cols])
    return buf.getvalue()


def _emit_report(report, args) -> None:
    if args.out:
        paths = write_report(report, args.out, args.format)
        print(json.dumps({"ok": True, "files": [str(p) for p in paths]}, indent=2))
    elif args.format == "csv":
        sys.stdout.write(_episode_table(report.episodes))
    else:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    _emit({
        "ok": True,
        "name": sc.name,
        "sha256": sc.sha256,
        "nodes": len(sc.res.nodes),
        "links": len(sc.res.links),
        "applications": [{"name": a.name, "components": len(a), "edges": len(a.edges)} for a in sc.apps],
        "arrival_order": list(sc.arrival_order),
        "n_zones": sc.n_zones,
        "initial_aval": list(sc.initial_aval),
    }, args)
    return 0


def cmd_partition(args) -> int:
    sc = load_scenario(args.scenario)
    seed = sc.partition_seed if args.seed is None else args.seed
    part = partition_resources(sc.res, sc.n_zones, seed)
    _emit({
        "ok": True,
        "seed": seed,
        "n_zones": part.n_zones,
        "assignment": list(part.assignment),
        "zones": [list(z) for z in part.zones],
        "problems": check_partition(sc.res, part),
    }, args, "partition.json")
    return 0


def _seed(args, sc) -> int:
    return sc.seed if args.seed is None else args.seed


def cmd_baseline(args) -> int:
    sc = load_scenario(args.scenario)
    report = run_experiment(sc, args.kind, args.episodes, _seed(args, sc), args.workers, args.timing)
    _emit_report(report, args)
    return 0


def cmd_eval(args) -> int:
    sc = load_scenario(args.scenario)
    report = run_experiment(
        sc, args.checkpoint, args.episodes, _seed(args, sc), args.workers, args.timing, greedy=args.greedy
    )
    _emit_report(report, args)
    return 0


def _require_out(args, what: str) -> Path:
    if not args.out:
        raise ExperimentError(f"{what} writes a checkpoint; pass --out <dir>")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_pretrain(args) -> int:
    sc = load_scenario(args.scenario)
    if not 0 <= args.zone < sc.n_zones:
        raise ExperimentError(f"zone {args.zone} out of range 0..{sc.n_zones - 1}")
    out = _require_out(args, "pretrain")
    overrides = {"seed": _seed(args, sc)}
    if args.episodes is not None:
        overrides["pretrain_episodes"] = args.episodes
    config = replace(sc.train, **overrides)
    result = pretrain_local(sc.environment(), args.zone, config)
    meta = {"scenario": sc.name, "sha256": sc.sha256, "version": __version__}
    save_checkpoint(out / "checkpoint.json", None, [result.policy], config, meta)
    log = {
        "tool": "hiplace",
        "version": __version__,
        "scenario": {"name": sc.name, "sha256": sc.sha256},
        "zone": args.zone,
        "config": config.as_dict(),
        "rewards": result.rewards,
        "losses": result.losses,
        "memory_bytes": training_memory([result.policy], [result.replay]),
    }
    files = [out / "checkpoint.json", out / "pretrain.json"]
    write_json(files[1], log)
    if args.format == "csv":
        files += write_streams(out, {"reward": result.rewards, "loss": result.losses})
    print(json.dumps({"ok": True, "files": [str(p) for p in files]}, indent=2))
    return 0


def cmd_train(args) -> int:
    sc = load_scenario(args.scenario)
    out = _require_out(args, "train")
    run = train_scenario(sc, _seed(args, sc), args.pretrain_episodes, args.joint_episodes, args.timing)
    meta = {"scenario": sc.name, "sha256": sc.sha256, "version": __version__}
    save_checkpoint(out / "checkpoint.json", run.global_policy, run.local_policies, run.config, meta)
    files = [out / "checkpoint.json", out / "training.json"]
    write_json(files[1], run.to_dict(sc))
    if args.format == "csv":
        streams = {f"pretrain_reward_zone{z}": p.rewards for z, p in enumerate(run.pretrain)}
        if run.joint is not None:
            streams["joint_reward"] = run.joint.global_rewards
        files += write_streams(out, streams)
    print(json.dumps({"ok": True, "files": [str(p) for p in files]}, indent=2))
    return 0


def cmd_oracle(args) -> int:
    sc = load_scenario(args.scenario)
    if not 0 <= args.app < len(sc.apps):
        raise ExperimentError(f"--app {args.app} out of range 0..{len(sc.apps) - 1}")
    app = sc.apps[args.app]
    nodes = [v for v, ok in enumerate(sc.initial_aval) if ok]
    state, value = oracle_optimal(app, sc.res, sc.weights, nodes=nodes)
    rep = cost_report(state, sc.weights)
    _emit({
        "ok": True,
        "application": app.name,
        "objective": value,
        "assignment": list(state.host),
        "ct_app": rep.ct_app,
        "ru": rep.ru,
        "svr": rep.svr,
        "per_component_ct": list(rep.per_component_ct),
    }, args, "oracle.json")
    return 0


def cmd_compare(args) -> int:
    table = compare([load_report(p) for p in args.reports])
    if args.format == "csv" and not args.out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source", "metric", "mean", "sd", "delta"])
        for row in table["rows"]:
            for m, s in row["metrics"].items():
                if s is not None:
                    w.writerow([row["source"], m, format_float(s["mean"]), format_float(s["sd"]),
                                format_float(s["delta"])])
        sys.stdout.write(buf.getvalue())
    else:
        _emit(table, args, "comparison.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default: the scenario's)")
    common.add_argument("--out", default=None, help="output directory (default: print to stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--workers", type=int, default=1, help="processes for episode evaluation")
    common.add_argument("--timing", action="store_true", help="record wall-clock times (non-reproducible)")

    parser = argparse.ArgumentParser(prog="hiplace", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hiplace {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="validate a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("partition", parents=[common], help="print the zone partition")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("baseline", parents=[common], help="evaluate a heuristic or the random policy")
    p.add_argument("scenario")
    p.add_argument("--kind", choices=(*HEURISTICS, "random"), required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("pretrain", parents=[common], help="pretrain one zone's local policy")
    p.add_argument("scenario")
    p.add_argument("--zone", type=int, required=True)
    p.add_argument("--episodes", type=int, default=None)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", parents=[common], help="pretrain all zones, then train jointly")
    p.add_argument("scenario")
    p.add_argument("--pretrain-episodes", type=int, default=None)
    p.add_argument("--joint-episodes", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a trained checkpoint")
    p.add_argument("scenario")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--greedy", action="store_true", help="take the most likely action instead of sampling")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", parents=[common], help="exhaustive optimum for one application")
    p.add_argument("scenario")
    p.add_argument("--app", type=int, default=0, help="application index")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", parents=[common], help="compare run reports")
    p.add_argument("reports", nargs="+")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        err = {"ok": False, "error": "invalid_scenario", "errors": exc.errors}
        code = 2
    except (ExperimentError, CheckpointError, OracleError) as exc:
        err = {"ok": False, "error": type(exc).__name__, "errors": [str(exc)]}
        code = 2
    except (TrainingDiverged, OSError, ValueError) as exc:
        err = {"ok": False, "error": type(exc).__name__, "errors": [str(exc)]}
        code = 1
    print(json.dumps(err, indent=2), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
