"""Trajectories and the bounded FIFO replay buffer used during joint training."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .policy import GlobalObservation, LocalObservation


@dataclass
class Step:
    obs: LocalObservation | GlobalObservation
    action: int | None  # None marks the all-masked terminal step
    logp: float
    reward: float = 0.0


@dataclass
class Trajectory:
    steps: list[Step] = field(default_factory=list)
    zone: int | None = None
    failed: bool = False

    @property
    def ret(self) -> float:
        return float(sum(s.reward for s in self.steps))

    @property
    def nbytes(self) -> int:
        return sum(s.obs.nbytes for s in self.steps)

    def decisions(self) -> list[Step]:
        """Steps where an actual choice among 2+ actions was sampled."""
        return [s for s in self.steps if s.action is not None and int(np.sum(s.obs.action_mask)) > 1]


class ReplayBuffer:
    """Bounded FIFO of trajectories with seeded uniform sampling."""

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: deque[Trajectory] = deque(maxlen=capacity)
        self._rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def append(self, traj: Trajectory) -> None:
        self._items.append(traj)

    def sample(self, n: int) -> list[Trajectory]:
        if not self._items or n <= 0:
            return []
        idx = self._rng.choice(len(self._items), size=min(n, len(self._items)), replace=False)
        return [self._items[i] for i in sorted(idx)]

    @property
    def nbytes(self) -> int:
        return sum(t.nbytes for t in self._items)
