"""REINFORCE training: local pretraining (phase 1) and joint global/local training (phase 2)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .episodes import Environment, run_global_episode, run_local_episode
from .policy import GlobalPolicy, LocalPolicy, Policy, Sample, masked_log_softmax, surrogate_loss
from .replay import ReplayBuffer, Trajectory


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
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

    def errors(self) -> list[str]:
        errs = []
        if not self.lr >= 0:
            errs.append("lr must be >= 0")
        if not 0.0 <= self.discount <= 1.0:
            errs.append("discount must be in [0, 1]")
        if not 0.0 <= self.replay_mix <= 1.0:
            errs.append("replay_mix must be in [0, 1]")
        if not 0.0 <= self.baseline_decay <= 1.0:
            errs.append("baseline_decay must be in [0, 1]")
        for name in ("pretrain_episodes", "joint_episodes"):
            if getattr(self, name) < 0:
                errs.append(f"{name} must be >= 0")
        if self.batch_size < 1:
            errs.append("batch_size must be >= 1")
        if self.replay_capacity < 1:
            errs.append("replay_capacity must be >= 1")
        if self.entropy_coef < 0 or self.grad_clip <= 0:
            errs.append("entropy_coef must be >= 0 and grad_clip > 0")
        return errs

    def as_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def discounted_returns(traj: Trajectory, discount: float) -> list[float]:
    out = []
    g = 0.0
    for s in reversed(traj.steps):
        g = s.reward + discount * g
        out.append(g)
    out.reverse()
    return out


class Learner:
    """Policy plus optimizer state and a moving-average return baseline."""

    def __init__(self, policy: Policy, config: TrainConfig):
        self.policy = policy
        self.config = config
        self.opt = Adam(policy.params, config.lr)
        self.baseline: float | None = None
        self.losses: list[float] = []

    def advantage_base(self) -> float:
        return 0.0 if self.baseline is None else self.baseline

    def observe_return(self, ret: float) -> None:
        d = self.config.baseline_decay
        self.baseline = ret if self.baseline is None else d * self.baseline + (1 - d) * ret

    def samples(self, traj: Trajectory, baseline: float, ratio: float = 1.0) -> list[Sample]:
        returns = discounted_returns(traj, self.config.discount)
        out = []
        for s, g in zip(traj.steps, returns):
            if s.action is None or int(np.sum(s.obs.action_mask)) < 2:
                continue
            out.append(Sample(s.obs, s.action, ratio * (g - baseline)))
        return out

    def update(self, samples: list[Sample]) -> float:
        if not samples:
            return 0.0
        loss, grads = surrogate_loss(self.policy, samples, self.config.entropy_coef)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingDiverged(f"non-finite loss or gradient ({loss})")
        clip_by_global_norm(grads, self.config.grad_clip)
        self.opt.step(grads)
        self.losses.append(loss)
        return loss


def importance_ratio(policy: LocalPolicy, traj: Trajectory, lo: float = 0.1, hi: float = 10.0) -> float:
    """exp(sum of current minus stored log-probs over the trajectory), clipped."""
    delta = 0.0
    for s in traj.steps:
        if s.action is None or int(np.sum(s.obs.action_mask)) < 2:
            continue
        scores, _ = policy.forward(s.obs)
        delta += float(masked_log_softmax(scores, s.obs.action_mask)[s.action]) - s.logp
    return float(np.clip(math.exp(min(delta, 50.0)), lo, hi))


@dataclass
class PretrainResult:
    policy: LocalPolicy
    replay: ReplayBuffer
    rewards: list[float] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)


def pretrain_local(
    env: Environment,
    zone: int,
    config: TrainConfig,
    policy: LocalPolicy | None = None,
    rng: np.random.Generator | None = None,
) -> PretrainResult:
    """Phase 1: train one zone's policy on its local reward, filling its replay buffer.

    Episode ``e`` places application ``e mod len(apps)`` into the zone from
    fresh resources.
    """
    rng = np.random.default_rng([config.seed, zone]) if rng is None else rng
    if policy is None:
        policy = LocalPolicy.init(np.random.default_rng([config.seed, 1000 + zone]), zone)
    learner = Learner(policy, config)
    replay = ReplayBuffer(config.replay_capacity, seed=config.seed + 7919 * (zone + 1))
    result = PretrainResult(policy, replay)
    batch: list[Sample] = []
    pending = 0
    for e in range(config.pretrain_episodes):
        app = env.apps[e % len(env.apps)]
        traj, _ = run_local_episode(env, zone, policy, env.fresh_state(app), rng)
        batch += learner.samples(traj, learner.advantage_base())
        learner.observe_return(traj.ret)
        replay.append(traj)
        result.rewards.append(traj.ret)
        pending += 1
        if pending == config.batch_size or e == config.pretrain_episodes - 1:
            learner.update(batch)
            batch, pending = [], 0
    result.losses = learner.losses
    return result


@dataclass
class JointResult:
    global_policy: GlobalPolicy
    local_policies: list[LocalPolicy]
    global_rewards: list[float] = field(default_factory=list)
    local_rewards: list[list[float]] = field(default_factory=list)
    replayed: int = 0


def joint_train(
    env: Environment,
    global_policy: GlobalPolicy,
    local_policies: list[LocalPolicy],
    replays: list[ReplayBuffer],
    config: TrainConfig,
    rng: np.random.Generator | None = None,
) -> JointResult:
    """Phase 2: train the global policy on the combined reward alongside the locals.

    Every ``batch_size`` episodes the global policy is updated first, then each
    local policy on its fresh trajectories mixed with importance-weighted
    replayed phase-1 trajectories. ``replay_mix`` is the long-run fraction of
    local-update trajectories drawn from replay.
    """
    rng = np.random.default_rng([config.seed, 10_000]) if rng is None else rng
    glearner = Learner(global_policy, config)
    llearners = [Learner(p, config) for p in local_policies]
    result = JointResult(global_policy, local_policies, local_rewards=[[] for _ in local_policies])
    gbatch: list[Sample] = []
    fresh: list[list[tuple[Trajectory, float]]] = [[] for _ in local_policies]
    credit = [0.0] * len(local_policies)
    pending = 0
    mix = config.replay_mix
    for e in range(config.joint_episodes):
        episode = run_global_episode(env, global_policy, local_policies, rng)
        gbatch += glearner.samples(episode.global_traj, glearner.advantage_base())
        glearner.observe_return(episode.reward)
        result.global_rewards.append(episode.reward)
        for traj in episode.local_trajs:
            k = traj.zone
            fresh[k].append((traj, llearners[k].advantage_base()))
            llearners[k].observe_return(traj.ret)
            result.local_rewards[k].append(traj.ret)
        pending += 1
        if pending < config.batch_size and e != config.joint_episodes - 1:
            continue
        glearner.update(gbatch)
        for k, learner in enumerate(llearners):
            if mix >= 1.0:
                n_replay = config.batch_size
                used = []
            else:
                credit[k] += mix / (1.0 - mix) * len(fresh[k])
                n_replay = int(credit[k])
                credit[k] -= n_replay
                used = fresh[k]
            samples: list[Sample] = []
            for traj, base in used:
                samples += learner.samples(traj, base)
            base = learner.advantage_base()
            for traj in replays[k].sample(n_replay) if k < len(replays) else []:
                ratio = importance_ratio(learner.policy, traj)
                samples += learner.samples(traj, base, ratio)
                result.replayed += 1
            learner.update(samples)
        gbatch, pending = [], 0
        fresh = [[] for _ in local_policies]
    return result
