"""Versioned JSON checkpoints of policy parameters with shape headers."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .policy import GlobalPolicy, LocalPolicy, Policy
from .train import TrainConfig

FORMAT = "hiplace-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _dump_params(policy: Policy) -> dict:
    return {
        name: {"shape": list(arr.shape), "data": [float(x) for x in arr.reshape(-1)]}
        for name, arr in policy.params.items()
    }


def checkpoint_dict(
    global_policy: GlobalPolicy | None, local_policies: list[LocalPolicy], config: TrainConfig, meta: dict | None = None
) -> dict:
    policies = []
    if global_policy is not None:
        policies.append({"kind": "global", "n_zones": global_policy.n_zones, "params": _dump_params(global_policy)})
    for p in local_policies:
        policies.append({"kind": "local", "zone": p.zone, "params": _dump_params(p)})
    return {"format": FORMAT, "version": VERSION, "config": config.as_dict(), "meta": meta or {}, "policies": policies}


def save_checkpoint(path, global_policy, local_policies, config: TrainConfig, meta: dict | None = None) -> None:
    data = checkpoint_dict(global_policy, local_policies, config, meta)
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=False) + "\n")


def _load_params(entry: dict, template: Policy, label: str) -> dict[str, np.ndarray]:
    raw = entry.get("params", {})
    if set(raw) != set(template.params):
        missing = sorted(set(template.params) - set(raw))
        extra = sorted(set(raw) - set(template.params))
        raise CheckpointError(f"{label}: parameter names differ (missing {missing}, unexpected {extra})")
    out = {}
    for name, ref in template.params.items():
        shape = tuple(raw[name]["shape"])
        if shape != ref.shape:
            raise CheckpointError(f"{label}: {name} has shape {shape}, expected {ref.shape}")
        data = np.asarray(raw[name]["data"], dtype=float)
        if data.size != ref.size:
            raise CheckpointError(f"{label}: {name} holds {data.size} values, header says {ref.size}")
        out[name] = data.reshape(shape)
    return out


def load_checkpoint(path, n_zones: int | None = None):
    """Return ``(global policy or None, local policies by zone, TrainConfig)``.

    Shapes are validated against freshly built policies; ``n_zones`` (when
    given) must match the checkpoint.
    """
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON ({exc})") from exc
    if data.get("format") != FORMAT or data.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format {data.get('format')!r} v{data.get('version')}")
    config = TrainConfig(**data["config"])
    rng = np.random.default_rng(0)
    global_policy = None
    locals_: dict[int, LocalPolicy] = {}
    for entry in data["policies"]:
        if entry["kind"] == "global":
            k = int(entry["n_zones"])
            if n_zones is not None and k != n_zones:
                raise CheckpointError(f"checkpoint global policy has {k} zones, scenario has {n_zones}")
            global_policy = GlobalPolicy(_load_params(entry, GlobalPolicy.init(rng, k), "global"), k)
        elif entry["kind"] == "local":
            z = int(entry["zone"])
            locals_[z] = LocalPolicy(_load_params(entry, LocalPolicy.init(rng, z), f"local[{z}]"), z)
        else:
            raise CheckpointError(f"unknown policy kind {entry['kind']!r}")
    ordered = [locals_[z] for z in sorted(locals_)]
    if n_zones is not None and global_policy is not None and sorted(locals_) != list(range(n_zones)):
        raise CheckpointError(f"checkpoint has local policies for zones {sorted(locals_)}, expected 0..{n_zones - 1}")
    return global_policy, ordered, config
