"""Graph containers, TU-format ingestion, splitting and Zipf-law imbalance."""
from __future__ import annotations

import json
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_TAG = "c3gnn-dataset"
FORMAT_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    node_features: np.ndarray = field(repr=False)

    def __post_init__(self):
        feats = np.asarray(self.node_features, dtype=np.float64)
        if feats.ndim != 2:
            raise DatasetError("node_features must be a matrix")
        if self.num_nodes < 1:
            raise DatasetError("graph with zero nodes")
        if feats.shape[0] != self.num_nodes:
            raise DatasetError(f"{feats.shape[0]} feature rows for {self.num_nodes} nodes")
        canon = []
        seen = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise DatasetError(f"edge ({u}, {v}) outside [0, {self.num_nodes})")
            if u == v:
                raise DatasetError(f"self-loop on node {u}")
            e = (u, v) if u < v else (v, u)
            if e in seen:
                raise DatasetError(f"duplicate edge {e}")
            seen.add(e)
            canon.append(e)
        feats.setflags(write=False)
        object.__setattr__(self, "edges", tuple(canon))
        object.__setattr__(self, "node_features", feats)

    @classmethod
    def from_edges(cls, num_nodes: int, edges, node_features) -> "Graph":
        """Build a graph, silently dropping self-loops and duplicate undirected edges."""
        uniq = sorted({(min(u, v), max(u, v)) for u, v in edges if u != v})
        return cls(num_nodes, tuple(uniq), node_features)

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self) -> list[list[int]]:
        adj = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and self.edges == other.edges
            and np.array_equal(self.node_features, other.node_features)
        )

    __hash__ = object.__hash__


@dataclass(frozen=True)
class LabeledGraph:
    graph: Graph
    label: int


@dataclass(frozen=True)
class Dataset:
    graphs: tuple[LabeledGraph, ...]
    num_classes: int
    feature_dim: int

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        for lg in self.graphs:
            if not 1 <= lg.label <= self.num_classes:
                raise DatasetError(f"label {lg.label} outside [1, {self.num_classes}]")
            if lg.graph.feature_dim != self.feature_dim:
                raise DatasetError("inconsistent node feature dimension")

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([lg.label for lg in self.graphs], dtype=np.int64)

    def class_counts(self) -> dict[int, int]:
        counts = Counter(lg.label for lg in self.graphs)
        return {c: counts.get(c, 0) for c in range(1, self.num_classes + 1)}

    def subset(self, indices) -> "Dataset":
        return Dataset(tuple(self.graphs[i] for i in indices), self.num_classes, self.feature_dim)


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    imbalance_factor: float = 1.0
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if min(fracs) <= 0:
            raise DatasetError("split fractions must be positive")
        if not math.isclose(sum(fracs), 1.0, abs_tol=1e-9):
            raise DatasetError("split fractions must sum to 1")
        if self.imbalance_factor < 1:
            raise DatasetError("imbalance factor must be >= 1")


# ---------------------------------------------------------------------------
# TU format


def _read_lines(path: Path) -> list[str]:
    if not path.exists():
        raise DatasetError(f"missing file: {path}")
    with open(path) as fh:
        return [ln.strip() for ln in fh if ln.strip()]


def parse_tu_dataset(directory, name: str) -> Dataset:
    """Read a TU benchmark directory (``<name>_A.txt`` and friends) into a Dataset."""
    root = Path(directory)
    edges_raw = [tuple(int(t) for t in ln.split(",")) for ln in _read_lines(root / f"{name}_A.txt")]
    indicator = [int(ln) for ln in _read_lines(root / f"{name}_graph_indicator.txt")]
    raw_labels = [int(ln) for ln in _read_lines(root / f"{name}_graph_labels.txt")]

    attr_path = root / f"{name}_node_attributes.txt"
    lab_path = root / f"{name}_node_labels.txt"
    if attr_path.exists():
        rows = [[float(t) for t in ln.split(",")] for ln in _read_lines(attr_path)]
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise DatasetError("inconsistent attribute dimension")
        feats = np.array(rows, dtype=np.float64)
    elif lab_path.exists():
        node_labels = [int(ln.split(",")[0]) for ln in _read_lines(lab_path)]
        values = sorted(set(node_labels))
        pos = {v: i for i, v in enumerate(values)}
        feats = np.zeros((len(node_labels), len(values)))
        feats[np.arange(len(node_labels)), [pos[v] for v in node_labels]] = 1.0
    else:
        raise DatasetError(f"missing file: need {attr_path.name} or {lab_path.name}")

    n_nodes = len(indicator)
    if feats.shape[0] != n_nodes:
        raise DatasetError(f"{feats.shape[0]} feature rows for {n_nodes} nodes")
    n_graphs = len(raw_labels)

    members = defaultdict(list)
    for node, g in enumerate(indicator):
        if not 1 <= g <= n_graphs:
            raise DatasetError(f"node {node + 1} assigned to unknown graph {g}")
        members[g].append(node)
    local = {}
    for g, nodes in members.items():
        for i, node in enumerate(nodes):
            local[node] = i

    graph_edges = defaultdict(set)
    for e in edges_raw:
        if len(e) != 2:
            raise DatasetError(f"malformed edge line {e}")
        u, v = e[0] - 1, e[1] - 1
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise DatasetError(f"edge ({e[0]}, {e[1]}) references unknown node")
        gu, gv = indicator[u], indicator[v]
        if gu != gv:
            raise DatasetError(f"cross-graph edge ({e[0]}, {e[1]})")
        a, b = local[u], local[v]
        if a != b:
            graph_edges[gu].add((min(a, b), max(a, b)))

    classes = sorted(set(raw_labels))
    remap = {c: i + 1 for i, c in enumerate(classes)}
    graphs = []
    for g in range(1, n_graphs + 1):
        nodes = members.get(g)
        if not nodes:
            raise DatasetError(f"graph {g} has zero nodes")
        graph = Graph(len(nodes), tuple(sorted(graph_edges[g])), feats[nodes])
        graphs.append(LabeledGraph(graph, remap[raw_labels[g - 1]]))
    return Dataset(tuple(graphs), len(classes), feats.shape[1])


def write_tu_dataset(dataset: Dataset, directory, name: str) -> None:
    """Write ``dataset`` in TU layout, node features as ``_node_attributes.txt``."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    offset = 0
    with open(root / f"{name}_A.txt", "w") as fa, \
            open(root / f"{name}_graph_indicator.txt", "w") as fi, \
            open(root / f"{name}_graph_labels.txt", "w") as fl, \
            open(root / f"{name}_node_attributes.txt", "w") as fx:
        for gi, lg in enumerate(dataset.graphs, start=1):
            g = lg.graph
            for u, v in g.edges:
                fa.write(f"{u + offset + 1}, {v + offset + 1}\n")
                fa.write(f"{v + offset + 1}, {u + offset + 1}\n")
            for row in g.node_features:
                fi.write(f"{gi}\n")
                fx.write(", ".join(repr(float(x)) for x in row) + "\n")
            fl.write(f"{lg.label}\n")
            offset += g.num_nodes


# ---------------------------------------------------------------------------
# internal serialization: JSON lines, first line is a header


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        header = {"format": FORMAT_TAG, "version": FORMAT_VERSION,
                  "num_classes": dataset.num_classes, "feature_dim": dataset.feature_dim,
                  "num_graphs": len(dataset)}
        fh.write(json.dumps(header) + "\n")
        for lg in dataset.graphs:
            g = lg.graph
            rec = {"label": lg.label, "num_nodes": g.num_nodes,
                   "edges": [list(e) for e in g.edges],
                   "x": g.node_features.tolist()}
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != FORMAT_TAG:
            raise DatasetError(f"{path}: not a {FORMAT_TAG} file")
        if header.get("version") != FORMAT_VERSION:
            raise DatasetError(f"{path}: unsupported version {header.get('version')}")
        d = header["feature_dim"]
        graphs = []
        for ln in fh:
            if not ln.strip():
                continue
            rec = json.loads(ln)
            x = np.array(rec["x"], dtype=np.float64).reshape(rec["num_nodes"], d)
            g = Graph(rec["num_nodes"], tuple(tuple(e) for e in rec["edges"]), x)
            graphs.append(LabeledGraph(g, rec["label"]))
    if len(graphs) != header["num_graphs"]:
        raise DatasetError(f"{path}: expected {header['num_graphs']} graphs, found {len(graphs)}")
    return Dataset(tuple(graphs), header["num_classes"], d)


# ---------------------------------------------------------------------------
# splitting and imbalance


def largest_remainder(n: int, fractions) -> list[int]:
    """Integer allocation of ``n`` proportional to ``fractions``; ties go to the earlier slot."""
    quotas = [n * f for f in fractions]
    counts = [math.floor(q) for q in quotas]
    rest = n - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts


def stratified_split(dataset: Dataset, spec: SplitSpec | None = None):
    """Per-class 3-way split using the fractions of a ``SplitSpec``; returns (train, val, test)."""
    spec = spec or SplitSpec()
    rng = np.random.default_rng(spec.seed)
    by_class = defaultdict(list)
    for i, lg in enumerate(dataset.graphs):
        by_class[lg.label].append(i)
    parts = ([], [], [])
    fracs = (spec.train_frac, spec.val_frac, spec.test_frac)
    for c in sorted(by_class):
        idx = by_class[c]
        if len(idx) < 3:
            raise DatasetError(f"class {c} has {len(idx)} graphs, need at least 3")
        counts = largest_remainder(len(idx), fracs)
        # every split keeps at least one graph of every class
        for s in range(3):
            if counts[s] == 0:
                donor = max(range(3), key=lambda t: (counts[t], -t))
                counts[donor] -= 1
                counts[s] += 1
        perm = [idx[j] for j in rng.permutation(len(idx))]
        start = 0
        for part, k in zip(parts, counts):
            part.extend(sorted(perm[start:start + k]))
            start += k
    return tuple(dataset.subset(sorted(p)) for p in parts)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def zipf_counts(n_first: int, num_classes: int, imbalance_factor: float) -> list[int]:
    """Target class sizes ``max(1, round(n_first * j**-gamma))`` by rank j."""
    if imbalance_factor < 1:
        raise DatasetError("imbalance factor must be >= 1")
    if num_classes == 1:
        if imbalance_factor > 1:
            raise DatasetError("a single class cannot be imbalanced")
        return [n_first]
    gamma = math.log(imbalance_factor) / math.log(num_classes)
    return [max(1, round_half_up(n_first * j ** (-gamma))) for j in range(1, num_classes + 1)]


def make_imbalanced(train_set: Dataset, imbalance_factor: float, seed: int = 0) -> Dataset:
    """Subsample ``train_set`` so class sizes decay along a Zipf curve.

    Classes are ranked by descending original size (ties by class index); the
    largest keeps all its graphs and rank j keeps ``round(N_1 * j**-gamma)``
    with ``gamma = ln(IF) / ln(K)``.
    """
    if imbalance_factor < 1:
        raise DatasetError("imbalance factor must be >= 1")
    counts = train_set.class_counts()
    if any(v == 0 for v in counts.values()):
        raise DatasetError("every class must be nonempty")
    ranked = sorted(counts, key=lambda c: (-counts[c], c))
    targets = zipf_counts(counts[ranked[0]], len(ranked), imbalance_factor)
    rng = np.random.default_rng(seed)
    by_class = defaultdict(list)
    for i, lg in enumerate(train_set.graphs):
        by_class[lg.label].append(i)
    keep = []
    for c, target in zip(ranked, targets):
        idx = by_class[c]
        k = min(target, len(idx))
        if k == len(idx):
            keep.extend(idx)
        else:
            keep.extend(idx[j] for j in rng.choice(len(idx), size=k, replace=False))
    return train_set.subset(sorted(keep))


def imbalance_factor(train_set: Dataset) -> float:
    counts = train_set.class_counts()
    if any(v == 0 for v in counts.values()):
        raise DatasetError("imbalance factor undefined with an empty class")
    return max(counts.values()) / min(counts.values())


def class_ranks(train_set: Dataset) -> list[int]:
    """Class labels ordered by descending training count (ties by label)."""
    counts = train_set.class_counts()
    return sorted(counts, key=lambda c: (-counts[c], c))


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
