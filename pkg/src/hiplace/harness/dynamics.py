"""Node availability dynamics: scheduled flips and seeded random toggling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..placement import PlacementState


@dataclass(frozen=True)
class DynamicsEvent:
    step: int
    node: int
    aval: bool


def next_flags(
    aval: Sequence[bool],
    hosting: set[int],
    events: Sequence[DynamicsEvent],
    toggle_rate: float,
    step: int,
    rng: np.random.Generator,
) -> tuple[bool, ...]:
    """Availability flags after the dynamics of ``step``.

    Scheduled events for this step are applied first, then (when
    ``toggle_rate > 0``) every node flips with that probability, one uniform
    draw per node. A node hosting a placed component is never switched off.
    """
    flags = [bool(a) for a in aval]
    for ev in events:
        if ev.step == step and (ev.aval or ev.node not in hosting):
            flags[ev.node] = ev.aval
    if toggle_rate > 0:
        u = rng.random(len(flags))
        for v, x in enumerate(u):
            if x < toggle_rate and not (flags[v] and v in hosting):
                flags[v] = not flags[v]
    return tuple(flags)


def apply_dynamics(state: PlacementState, scenario, step: int, rng: np.random.Generator) -> tuple[bool, ...]:
    """Updated availability flags of ``state`` at ``step`` under ``scenario``'s dynamics."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    return next_flags(state.aval, state.hosting(), scenario.events, scenario.toggle_rate, step, rng)


@dataclass(frozen=True)
class ScenarioDynamics:
    """Environment hook applying dynamics once per placement step.

    The step index is ``state.step`` (placements made so far across all
    applications); ``state.clock`` records the last step already processed, so
    calling the hook again within a step is a no-op.
    """

    events: tuple[DynamicsEvent, ...] = ()
    toggle_rate: float = 0.0

    def __call__(self, state: PlacementState, rng: np.random.Generator) -> PlacementState:
        step = state.step
        if state.clock >= step:
            return state
        flags = next_flags(state.aval, state.hosting(), self.events, self.toggle_rate, step, rng)
        return state.with_aval(flags, clock=step)
