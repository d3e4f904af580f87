"""Stochastic graph augmentations used to build contrastive view pairs."""
from __future__ import annotations

import enum
import math

import numpy as np

from .graphdata import Graph

DEFAULT_RATIO = 0.2


class AugmentationKind(enum.Enum):
    NODE_DROPPING = "node_dropping"
    EDGE_PERTURBATION = "edge_perturbation"
    ATTRIBUTE_MASKING = "attribute_masking"
    SUBGRAPH = "subgraph"


KINDS = tuple(AugmentationKind)


class AugmentationError(ValueError):
    pass


def _induced(graph: Graph, keep: np.ndarray) -> Graph:
    keep = np.sort(keep)
    pos = -np.ones(graph.num_nodes, dtype=np.int64)
    pos[keep] = np.arange(len(keep))
    edges = tuple((int(pos[u]), int(pos[v])) for u, v in graph.edges if pos[u] >= 0 and pos[v] >= 0)
    return Graph(len(keep), edges, graph.node_features[keep])


def drop_nodes(graph: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    n = graph.num_nodes
    k = math.floor(ratio * n)
    if k == 0:
        return graph
    dropped = rng.choice(n, size=k, replace=False)
    return _induced(graph, np.setdiff1d(np.arange(n), dropped))


def perturb_edges(graph: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    m = graph.num_edges
    k = math.floor(ratio * m)
    if k == 0:
        return graph
    n = graph.num_nodes
    removed = set(rng.choice(m, size=k, replace=False).tolist())
    kept = [e for i, e in enumerate(graph.edges) if i not in removed]
    present = set(kept)
    candidates = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in present]
    added = [candidates[i] for i in rng.choice(len(candidates), size=k, replace=False)]
    return Graph(n, tuple(sorted(kept + added)), graph.node_features)


def mask_attributes(graph: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    n = graph.num_nodes
    k = math.floor(ratio * n)
    if k == 0:
        return graph
    x = graph.node_features.copy()
    x[rng.choice(n, size=k, replace=False)] = 0.0
    return Graph(n, graph.edges, x)


def random_walk_subgraph(graph: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    n = graph.num_nodes
    target = math.ceil((1 - ratio) * n)
    if target >= n:
        return graph
    adj = graph.neighbors()
    current = int(rng.integers(n))
    visited = {current}
    order = [current]
    stall = 0
    while len(visited) < target:
        nbrs = adj[current]
        frontier_left = any(u not in visited for v in order for u in adj[v])
        if not nbrs or not frontier_left or stall > 4 * n:
            # dead end: restart from an unvisited node
            rest = [v for v in range(n) if v not in visited]
            current = int(rest[rng.integers(len(rest))])
            visited.add(current)
            order.append(current)
            stall = 0
            continue
        current = int(nbrs[rng.integers(len(nbrs))])
        if current in visited:
            stall += 1
        else:
            visited.add(current)
            order.append(current)
            stall = 0
    return _induced(graph, np.fromiter(visited, dtype=np.int64))


_APPLY = {
    AugmentationKind.NODE_DROPPING: drop_nodes,
    AugmentationKind.EDGE_PERTURBATION: perturb_edges,
    AugmentationKind.ATTRIBUTE_MASKING: mask_attributes,
    AugmentationKind.SUBGRAPH: random_walk_subgraph,
}


def applicable(graph: Graph, kind: AugmentationKind) -> bool:
    if kind in (AugmentationKind.NODE_DROPPING, AugmentationKind.SUBGRAPH):
        return graph.num_nodes >= 2
    if kind is AugmentationKind.EDGE_PERTURBATION:
        return graph.num_edges >= 1
    return True


def augment(graph: Graph, kind: AugmentationKind, ratio: float = DEFAULT_RATIO, rng_seed=0) -> Graph:
    """Apply one augmentation; ``rng_seed`` may be an int or a numpy Generator."""
    if not 0 < ratio < 1:
        raise AugmentationError(f"ratio {ratio} outside (0, 1)")
    kind = AugmentationKind(kind)
    if not applicable(graph, kind):
        raise AugmentationError(f"{kind.value} not applicable to a graph with "
                                f"{graph.num_nodes} nodes and {graph.num_edges} edges")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return _APPLY[kind](graph, ratio, rng)


def sample_kind(rng: np.random.Generator) -> AugmentationKind:
    return KINDS[int(rng.integers(len(KINDS)))]


def sample_view_pair(graph: Graph, rng_seed=0, kind: AugmentationKind | None = None,
                     ratio: float = DEFAULT_RATIO) -> tuple[Graph, Graph]:
    """Two independently augmented views of ``graph`` under one augmentation kind.

    When ``kind`` is None it is drawn uniformly from the four kinds.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if kind is None:
        kind = sample_kind(rng)
    return augment(graph, kind, ratio, rng), augment(graph, kind, ratio, rng)
