"""Seeded generators of small random placement instances shared by the tests."""

from __future__ import annotations

import numpy as np

from hiplace.model import (
    AppEdgeSpec,
    ApplicationGraph,
    ComponentSpec,
    ResourceGraph,
    ResourceLinkSpec,
    ResourceNodeSpec,
)
from hiplace.placement import action_mask, apply, initial_state


def random_tree_plus(rng: np.random.Generator, n: int, extra: float) -> list[tuple[int, int]]:
    """Random spanning tree over ``n`` vertices plus each other pair with probability ``extra``."""
    pairs = set()
    for v in range(1, n):
        pairs.add((int(rng.integers(v)), v))
    for u in range(n):
        for v in range(u + 1, n):
            if (u, v) not in pairs and rng.random() < extra:
                pairs.add((u, v))
    return sorted(pairs)


def random_resources(rng: np.random.Generator, n: int, extra: float = 0.4) -> ResourceGraph:
    nodes = []
    for i in range(n):
        gpu = float(rng.integers(0, 3)) if rng.random() < 0.5 else 0.0
        nodes.append(ResourceNodeSpec(
            i,
            float(rng.integers(2, 9)),
            gpu,
            float(rng.integers(2, 17)),
            float(rng.integers(8, 65)),
            float(rng.uniform(0.0, 10.0)),
            float(rng.uniform(0.5, 8.0)),
        ))
    links = [
        ResourceLinkSpec(u, v, float(rng.uniform(0.0, 5.0)), float(rng.uniform(5.0, 200.0)))
        for u, v in random_tree_plus(rng, n, extra)
    ]
    return ResourceGraph(tuple(nodes), tuple(links))


def random_application(rng: np.random.Generator, n: int, extra: float = 0.3) -> ApplicationGraph:
    comps = tuple(
        ComponentSpec(
            i,
            float(rng.integers(1, 4)),
            1.0 if rng.random() < 0.15 else 0.0,
            float(rng.integers(1, 6)),
            float(rng.integers(1, 17)),
            float(rng.uniform(0.0, 20.0)),
            float(rng.uniform(3.0, 25.0)),
        )
        for i in range(n)
    )
    edges = tuple(
        AppEdgeSpec(u, v, float(rng.uniform(5.0, 40.0)), float(rng.uniform(0.0, 50.0)), float(rng.uniform(1.0, 60.0)))
        for u, v in random_tree_plus(rng, n, extra)
    )
    return ApplicationGraph(comps, edges)


def random_instance(seed: int, max_components: int = 4, max_nodes: int = 5):
    rng = np.random.default_rng(seed)
    res = random_resources(rng, int(rng.integers(2, max_nodes + 1)))
    app = random_application(rng, int(rng.integers(1, max_components + 1)))
    return app, res


def random_rollout(app, res, rng: np.random.Generator, aval=None):
    """Place components uniformly among feasible nodes; stops early at a dead end."""
    state = initial_state(res, app, aval)
    states = [state]
    for c in state.order:
        mask = action_mask(state, c)
        feasible = [v for v, ok in zip(mask.nodes, mask.allowed) if ok]
        if not feasible:
            break
        state = apply(state, c, feasible[int(rng.integers(len(feasible)))])
        states.append(state)
    return states
