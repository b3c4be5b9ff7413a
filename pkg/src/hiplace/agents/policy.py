"""Local and global placement policies over graph embeddings.

Both policies keep their parameters in one ordered ``dict`` of numpy arrays so
the optimizer, checkpointing and gradient checks treat them uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..embedding import (
    APP_FEATURES,
    HIDDEN,
    LAYERS,
    RES_FEATURES,
    EncoderParams,
    aggregate_zones,
    encode,
    encode_backward,
)

HEAD_HIDDEN = 32


class NoFeasibleAction(RuntimeError):
    """Every action is masked."""


@dataclass(frozen=True)
class GraphInput:
    x: np.ndarray
    adj: np.ndarray
    mask: np.ndarray | None = None


@dataclass(frozen=True)
class LocalObservation:
    app: GraphInput
    res: GraphInput  # zone subgraph; mask = availability
    component: int
    action_mask: np.ndarray  # bool per zone node
    nodes: tuple[int, ...]  # global ids of the zone nodes

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in (self.app.x, self.app.adj, self.res.x, self.res.adj, self.action_mask))


@dataclass(frozen=True)
class GlobalObservation:
    app: GraphInput
    zones: tuple[GraphInput, ...]
    action_mask: np.ndarray  # bool per zone

    @property
    def nbytes(self) -> int:
        return self.app.x.nbytes + self.app.adj.nbytes + sum(z.x.nbytes + z.adj.nbytes for z in self.zones)


def _encoder_view(params: dict[str, np.ndarray], prefix: str) -> EncoderParams:
    layers = []
    i = 0
    while f"{prefix}.{i}.w_self" in params:
        layers.append((params[f"{prefix}.{i}.w_self"], params[f"{prefix}.{i}.w_nbr"], params[f"{prefix}.{i}.b"]))
        i += 1
    return EncoderParams(layers)


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, shape)


class Policy:
    """Shared plumbing: parameter dict, encoders, gradient containers."""

    kind = "policy"

    def __init__(self, params: dict[str, np.ndarray]):
        self.params = params

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def nbytes(self) -> int:
        return sum(v.nbytes for v in self.params.values())

    def copy(self):
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.params = {k: v.copy() for k, v in self.params.items()}
        return clone

    def encoder(self, prefix: str) -> EncoderParams:
        return _encoder_view(self.params, prefix)

    @staticmethod
    def _add_encoder_grads(grads, prefix: str, enc_grads: EncoderParams) -> None:
        for (name, g) in enc_grads.named(prefix):
            grads[name] += g

    @staticmethod
    def _init_encoder(params, rng, prefix: str, d_in: int) -> None:
        enc = EncoderParams.init(rng, d_in, HIDDEN, HIDDEN, LAYERS)
        params.update(enc.named(prefix))


class LocalPolicy(Policy):
    """Scores each zone node for the component being placed.

    Node score = MLP([app pooled | zone pooled | component embedding | node embedding]).
    """

    kind = "local"

    def __init__(self, params: dict[str, np.ndarray], zone: int = 0):
        super().__init__(params)
        self.zone = zone

    @classmethod
    def init(cls, rng: np.random.Generator, zone: int = 0) -> LocalPolicy:
        params: dict[str, np.ndarray] = {}
        cls._init_encoder(params, rng, "app", len(APP_FEATURES))
        cls._init_encoder(params, rng, "res", len(RES_FEATURES))
        d = 4 * HIDDEN
        params["head.w1"] = _uniform(rng, d, (d, HEAD_HIDDEN))
        params["head.b1"] = _uniform(rng, d, HEAD_HIDDEN)
        params["head.w2"] = _uniform(rng, HEAD_HIDDEN, HEAD_HIDDEN)
        params["head.b2"] = _uniform(rng, HEAD_HIDDEN, 1)
        return cls(params, zone)

    def forward(self, obs: LocalObservation):
        p = self.params
        app_emb, app_cache = encode(obs.app.x, obs.app.adj, self.encoder("app"), obs.app.mask, return_cache=True)
        res_emb, res_cache = encode(obs.res.x, obs.res.adj, self.encoder("res"), obs.res.mask, return_cache=True)
        n = obs.res.x.shape[0]
        x = np.concatenate(
            [
                np.broadcast_to(app_emb.pooled, (n, HIDDEN)),
                np.broadcast_to(res_emb.pooled, (n, HIDDEN)),
                np.broadcast_to(app_emb.per_node[obs.component], (n, HIDDEN)),
                res_emb.per_node,
            ],
            axis=1,
        )
        hid = np.tanh(x @ p["head.w1"] + p["head.b1"])
        scores = hid @ p["head.w2"] + p["head.b2"][0]
        return scores, (obs, app_cache, res_cache, x, hid)

    def backward(self, cache, d_scores: np.ndarray, grads: dict[str, np.ndarray]) -> None:
        obs, app_cache, res_cache, x, hid = cache
        p = self.params
        grads["head.w2"] += hid.T @ d_scores
        grads["head.b2"] += d_scores.sum()
        dz = np.outer(d_scores, p["head.w2"]) * (1.0 - hid * hid)
        grads["head.w1"] += x.T @ dz
        grads["head.b1"] += dz.sum(axis=0)
        dx = dz @ p["head.w1"].T
        h = HIDDEN
        d_app_nodes = np.zeros((obs.app.x.shape[0], h))
        d_app_nodes[obs.component] = dx[:, 2 * h : 3 * h].sum(axis=0)
        self._add_encoder_grads(
            grads, "app",
            encode_backward(self.encoder("app"), app_cache, d_app_nodes, dx[:, :h].sum(axis=0)),
        )
        self._add_encoder_grads(
            grads, "res",
            encode_backward(self.encoder("res"), res_cache, dx[:, 3 * h :], dx[:, h : 2 * h].sum(axis=0)),
        )


class GlobalPolicy(Policy):
    """Scores each zone from [app pooled | concatenated zone pooled vectors]."""

    kind = "global"

    def __init__(self, params: dict[str, np.ndarray], n_zones: int):
        super().__init__(params)
        self.n_zones = n_zones

    @classmethod
    def init(cls, rng: np.random.Generator, n_zones: int) -> GlobalPolicy:
        params: dict[str, np.ndarray] = {}
        cls._init_encoder(params, rng, "app", len(APP_FEATURES))
        cls._init_encoder(params, rng, "res", len(RES_FEATURES))
        d = HIDDEN * (1 + n_zones)
        params["head.w1"] = _uniform(rng, d, (d, HEAD_HIDDEN))
        params["head.b1"] = _uniform(rng, d, HEAD_HIDDEN)
        params["head.w2"] = _uniform(rng, HEAD_HIDDEN, (HEAD_HIDDEN, n_zones))
        params["head.b2"] = _uniform(rng, HEAD_HIDDEN, n_zones)
        return cls(params, n_zones)

    def embed(self, obs: GlobalObservation, return_caches: bool = False):
        """Global feature vector: app pooled embedding followed by zone blocks."""
        app_emb, app_cache = encode(obs.app.x, obs.app.adj, self.encoder("app"), obs.app.mask, return_cache=True)
        enc = self.encoder("res")
        zone_out = [encode(z.x, z.adj, enc, z.mask, return_cache=True) for z in obs.zones]
        vec = np.concatenate([app_emb.pooled, aggregate_zones([e.pooled for e, _ in zone_out])])
        if return_caches:
            return vec, app_cache, [c for _, c in zone_out]
        return vec

    def forward(self, obs: GlobalObservation):
        if len(obs.zones) != self.n_zones:
            raise ValueError(f"observation has {len(obs.zones)} zones, policy expects {self.n_zones}")
        p = self.params
        x, app_cache, zone_caches = self.embed(obs, return_caches=True)
        hid = np.tanh(x @ p["head.w1"] + p["head.b1"])
        scores = hid @ p["head.w2"] + p["head.b2"]
        return scores, (app_cache, zone_caches, x, hid)

    def backward(self, cache, d_scores: np.ndarray, grads: dict[str, np.ndarray]) -> None:
        app_cache, zone_caches, x, hid = cache
        p = self.params
        grads["head.w2"] += np.outer(hid, d_scores)
        grads["head.b2"] += d_scores
        dz = (p["head.w2"] @ d_scores) * (1.0 - hid * hid)
        grads["head.w1"] += np.outer(x, dz)
        grads["head.b1"] += dz
        dx = p["head.w1"] @ dz
        h = HIDDEN
        self._add_encoder_grads(grads, "app", encode_backward(self.encoder("app"), app_cache, None, dx[:h]))
        enc = self.encoder("res")
        for k, zc in enumerate(zone_caches):
            d_pool = dx[h * (k + 1) : h * (k + 2)]
            self._add_encoder_grads(grads, "res", encode_backward(enc, zc, None, d_pool))


def masked_log_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log-probabilities with masked entries at -inf (probability exactly 0)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise NoFeasibleAction("all actions are masked")
    live = scores[mask]
    top = live.max()
    log_z = top + np.log(np.exp(live - top).sum())
    return np.where(mask, scores - log_z, -np.inf)


def act(
    policy: Policy,
    obs: LocalObservation | GlobalObservation,
    rng: np.random.Generator,
    greedy: bool = False,
    mask: np.ndarray | None = None,
) -> tuple[int, float]:
    """Pick an action among unmasked ones; returns ``(index, log-probability)``.

    A single unmasked action is returned without consuming randomness.
    Greedy mode takes the lowest-index argmax.
    """
    mask = np.asarray(obs.action_mask if mask is None else mask, dtype=bool)
    live = np.flatnonzero(mask)
    if live.size == 0:
        raise NoFeasibleAction("all actions are masked")
    if live.size == 1:
        return int(live[0]), 0.0
    scores, _ = policy.forward(obs)
    logp = masked_log_softmax(scores, mask)
    if greedy:
        a = int(live[np.argmax(logp[live])])
    else:
        probs = np.exp(logp[live])
        a = int(live[rng.choice(live.size, p=probs / probs.sum())])
    return a, float(logp[a])


def action_probabilities(policy: Policy, obs) -> np.ndarray:
    scores, _ = policy.forward(obs)
    return np.exp(masked_log_softmax(scores, obs.action_mask))


@dataclass(frozen=True)
class Sample:
    """One term of the surrogate loss: ``-weight * log pi(action|obs) - ent_coef * H``."""

    obs: LocalObservation | GlobalObservation
    action: int
    weight: float


def surrogate_loss(
    policy: Policy, batch: Sequence[Sample], ent_coef: float = 0.0, with_grad: bool = True
) -> tuple[float, dict[str, np.ndarray] | None]:
    """Policy-gradient surrogate loss summed over ``batch`` and its analytic gradient."""
    grads = policy.zero_grads() if with_grad else None
    loss = 0.0
    for s in batch:
        mask = np.asarray(s.obs.action_mask, dtype=bool)
        scores, cache = policy.forward(s.obs)
        logp = masked_log_softmax(scores, mask)
        safe_logp = np.where(mask, logp, 0.0)
        p = np.where(mask, np.exp(safe_logp), 0.0)
        entropy = -float(np.sum(p * safe_logp))
        loss += -s.weight * logp[s.action] - ent_coef * entropy
        if with_grad:
            d = s.weight * p
            d[s.action] -= s.weight
            # dH/ds_j = -p_j (log p_j + H); masked entries have p_j = 0
            d += ent_coef * p * (safe_logp + entropy)
            policy.backward(cache, d, grads)
    return float(loss), grads


def gradient_check(
    policy: Policy,
    batch: Sequence[Sample],
    ent_coef: float = 0.01,
    h: float = 1e-5,
    names: Sequence[str] | None = None,
    floor: float = 1e-6,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``; the
    floor keeps coordinates whose true gradient is ~0 from dividing by noise.
    """
    _, analytic = surrogate_loss(policy, batch, ent_coef)
    worst = 0.0
    for name in names or list(policy.params):
        arr = policy.params[name]
        flat = arr.reshape(-1)
        ga = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up, _ = surrogate_loss(policy, batch, ent_coef, with_grad=False)
            flat[i] = orig - h
            down, _ = surrogate_loss(policy, batch, ent_coef, with_grad=False)
            flat[i] = orig
            num = (up - down) / (2 * h)
            a = ga[i]
            if a == 0.0 and num == 0.0:
                continue
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
    return worst
