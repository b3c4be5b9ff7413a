"""Feature extraction and a masked mean-aggregation graph encoder (numpy, manual backprop).

Each layer computes ``H' = tanh(H W_self + mean_nbr(H) W_nbr + b)`` where the
neighbor mean only covers unmasked neighbors. Masked nodes have their input
rows zeroed and emit zero embeddings, so they influence nothing downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ApplicationGraph, ResourceGraph
from .placement import PlacementState

APP_FEATURES = ("cpu", "gpu", "ram", "stor", "work", "ddl", "placed")
RES_FEATURES = (
    "cpu", "gpu", "ram", "stor", "pt", "speed",
    "free_cpu", "free_gpu", "free_ram", "free_stor", "aval",
)
HIDDEN = 16
LAYERS = 2


@dataclass(frozen=True)
class FeatureScale:
    """Per-scenario divisors: the maximum of each raw feature (1 where that max is 0)."""

    app: tuple[float, ...]  # cpu, gpu, ram, stor, work, ddl
    res: tuple[float, ...]  # cpu, gpu, ram, stor, pt, speed

    @classmethod
    def from_graphs(cls, res: ResourceGraph, apps: Sequence[ApplicationGraph]) -> FeatureScale:
        def scale(rows):
            return tuple(float(m) if m > 0 else 1.0 for m in np.max(np.asarray(rows, dtype=float), axis=0))

        app_rows = [(c.cpu, c.gpu, c.ram, c.stor, c.work, c.ddl) for a in apps for c in a.components]
        res_rows = [(n.cpu, n.gpu, n.ram, n.stor, n.pt, n.speed) for n in res.nodes]
        return cls(scale(app_rows or [[0.0] * 6]), scale(res_rows))

    def as_dict(self) -> dict:
        return {"app": list(self.app), "res": list(self.res)}


@dataclass
class EncoderParams:
    """Per-layer ``(W_self, W_nbr, b)``; shapes chain d_in -> d_h -> ... -> d_out."""

    layers: list[tuple[np.ndarray, np.ndarray, np.ndarray]]

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_hidden: int = HIDDEN,
             d_out: int = HIDDEN, n_layers: int = LAYERS) -> EncoderParams:
        dims = [d_in] + [d_hidden] * (n_layers - 1) + [d_out]
        layers = []
        for a, b in zip(dims[:-1], dims[1:]):
            s = 1.0 / np.sqrt(a)
            layers.append((rng.uniform(-s, s, (a, b)), rng.uniform(-s, s, (a, b)), rng.uniform(-s, s, b)))
        return cls(layers)

    @classmethod
    def zeros_like(cls, other: EncoderParams) -> EncoderParams:
        return cls([tuple(np.zeros_like(p) for p in layer) for layer in other.layers])

    def named(self, prefix: str) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, (ws, wn, b) in enumerate(self.layers):
            out += [(f"{prefix}.{i}.w_self", ws), (f"{prefix}.{i}.w_nbr", wn), (f"{prefix}.{i}.b", b)]
        return out

    def shape_errors(self) -> list[str]:
        errs = []
        prev = None
        for i, (ws, wn, b) in enumerate(self.layers):
            if ws.shape != wn.shape or ws.ndim != 2 or b.shape != (ws.shape[1],):
                errs.append(f"layer {i}: inconsistent shapes {ws.shape}, {wn.shape}, {b.shape}")
            if prev is not None and ws.shape[0] != prev:
                errs.append(f"layer {i}: input dim {ws.shape[0]} != previous output {prev}")
            prev = ws.shape[1]
        return errs


@dataclass(frozen=True)
class Embedding:
    per_node: np.ndarray  # (n, d_out), zero rows for masked nodes
    pooled: np.ndarray  # (d_out,), mean over unmasked rows


def adjacency(graph: ApplicationGraph | ResourceGraph) -> np.ndarray:
    if isinstance(graph, ApplicationGraph):
        n, pairs = len(graph.components), [(e.u, e.v) for e in graph.edges]
    else:
        n, pairs = len(graph.nodes), [(l.u, l.v) for l in graph.links]
    a = np.zeros((n, n))
    for u, v in pairs:
        a[u, v] = a[v, u] = 1.0
    return a


def featurize_application(
    app: ApplicationGraph, state: PlacementState | None, scale: FeatureScale
) -> np.ndarray:
    """Rows ``[cpu, gpu, ram, stor, work, ddl, placed]``; placed comes from ``state``."""
    x = np.zeros((len(app.components), len(APP_FEATURES)))
    for c in app.components:
        x[c.id, :6] = np.array([c.cpu, c.gpu, c.ram, c.stor, c.work, c.ddl]) / np.array(scale.app)
        if state is not None and state.app is app and state.host[c.id] is not None:
            x[c.id, 6] = 1.0
    return x


def featurize_resources(
    res: ResourceGraph,
    state: PlacementState | None,
    scale: FeatureScale,
    aval: Sequence[bool] | None = None,
) -> np.ndarray:
    """Rows of capacities, timing, residual fractions and the availability flag.

    ``res`` may be a zone subgraph; residuals and availability are looked up
    through its global ids. Unavailable nodes keep their rows.
    """
    x = np.zeros((len(res.nodes), len(RES_FEATURES)))
    for n in res.nodes:
        g = res.to_global(n.id)
        x[n.id, :6] = np.array([n.cpu, n.gpu, n.ram, n.stor, n.pt, n.speed]) / np.array(scale.res)
        left = state.residual[g] if state is not None else n.capacity
        for d, cap in enumerate(n.capacity):
            x[n.id, 6 + d] = left[d] / cap if cap > 0 else 0.0
        if aval is not None:
            on = aval[n.id]
        elif state is not None:
            on = state.aval[g]
        else:
            on = n.aval
        x[n.id, 10] = 1.0 if on else 0.0
    return x


def _mean_operator(adj: np.ndarray, mask: np.ndarray) -> np.ndarray:
    a = adj * mask[:, None] * mask[None, :]
    deg = a.sum(axis=1)
    safe = np.where(deg > 0, deg, 1.0)
    return a / safe[:, None]


@dataclass
class EncoderCache:
    mask: np.ndarray
    mean_op: np.ndarray
    inputs: list[np.ndarray]  # H fed to each layer
    nbr: list[np.ndarray]  # mean-aggregated H for each layer
    outputs: list[np.ndarray]  # tanh outputs (pre-mask)
    count: int


def encode(
    features: np.ndarray,
    adj: np.ndarray,
    params: EncoderParams,
    node_mask: np.ndarray | None = None,
    return_cache: bool = False,
):
    """Run all message-passing layers and masked mean pooling."""
    n = features.shape[0]
    if adj.shape != (n, n):
        raise ValueError(f"adjacency shape {adj.shape} does not match {n} feature rows")
    if params.layers and features.shape[1] != params.layers[0][0].shape[0]:
        raise ValueError(
            f"feature width {features.shape[1]} != encoder input {params.layers[0][0].shape[0]}"
        )
    mask = np.ones(n) if node_mask is None else np.asarray(node_mask, dtype=float)
    keep = mask > 0
    mean_op = _mean_operator(adj, mask)
    h = np.where(keep[:, None], features, 0.0)
    cache = EncoderCache(mask, mean_op, [], [], [], int(keep.sum()))
    for ws, wn, b in params.layers:
        m = mean_op @ h
        out = np.tanh(h @ ws + m @ wn + b)
        cache.inputs.append(h)
        cache.nbr.append(m)
        cache.outputs.append(out)
        h = np.where(keep[:, None], out, 0.0)
    d_out = params.layers[-1][0].shape[1] if params.layers else features.shape[1]
    pooled = h[keep].sum(axis=0) / cache.count if cache.count else np.zeros(d_out)
    emb = Embedding(h, pooled)
    return (emb, cache) if return_cache else emb


def encode_backward(
    params: EncoderParams,
    cache: EncoderCache,
    d_per_node: np.ndarray | None,
    d_pooled: np.ndarray | None,
) -> EncoderParams:
    """Gradients of a scalar loss w.r.t. encoder parameters, given output gradients."""
    keep = cache.mask > 0
    d_out = params.layers[-1][0].shape[1]
    n = cache.mask.shape[0]
    dh = np.zeros((n, d_out)) if d_per_node is None else np.array(d_per_node, dtype=float)
    if d_pooled is not None and cache.count:
        dh = dh + np.where(keep[:, None], d_pooled[None, :] / cache.count, 0.0)
    grads = []
    for (ws, wn, b), h, m, out in zip(
        reversed(params.layers), reversed(cache.inputs), reversed(cache.nbr), reversed(cache.outputs)
    ):
        dz = np.where(keep[:, None], dh, 0.0) * (1.0 - out * out)
        grads.append((h.T @ dz, m.T @ dz, dz.sum(axis=0)))
        dh = dz @ ws.T + cache.mean_op.T @ (dz @ wn.T)
    grads.reverse()
    return EncoderParams(grads)


def aggregate_zones(pooled: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate per-zone pooled vectors in zone-id order."""
    if not pooled:
        raise ValueError("need at least one zone embedding")
    width = {len(p) for p in pooled}
    if len(width) != 1:
        raise ValueError(f"zone embeddings have different lengths {sorted(width)}")
    return np.concatenate([np.asarray(p, dtype=float) for p in pooled])
