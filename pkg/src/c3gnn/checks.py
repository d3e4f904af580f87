"""Finite-difference gradient suite over the encoder, heads and losses."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .augmentation import sample_view_pair
from .autodiff import GradCheckReport, grad_check
from .contrastive import DEFAULT_TAU, BatchView, cross_entropy, inter_loss, intra_loss
from .encoder import EncoderDims, batch_graphs, classify, encode_batch, init_params, project
from .graphdata import Graph

STEP = 1e-6
TOL = 1e-4


@dataclass
class SuiteResult:
    name: str
    report: GradCheckReport
    seconds: float

    def line(self) -> str:
        return f"{self.name:<28} {self.report}  ({self.seconds:.1f}s)"


def random_graph(rng: np.random.Generator, in_dim: int, max_nodes: int = 12) -> Graph:
    n = int(rng.integers(3, max_nodes + 1))
    edges = {(int(rng.integers(i)), i) for i in range(1, n)}
    for _ in range(int(rng.integers(0, n))):
        u, v = sorted(rng.choice(n, size=2, replace=False).tolist())
        edges.add((u, v))
    return Graph(n, tuple(sorted(edges)), rng.normal(size=(n, in_dim)))


def random_batch(seed: int, num_graphs: int = 8, in_dim: int = 4, num_classes: int = 3):
    """Graphs, class labels and subclass ids with every class split in two."""
    rng = np.random.default_rng(seed)
    graphs = [random_graph(rng, in_dim) for _ in range(num_graphs)]
    labels = np.array([1 + i % num_classes for i in range(num_graphs)])
    subclasses = np.array([2 * (labels[i] - 1) + (i // num_classes) % 2 for i in range(num_graphs)])
    return graphs, labels, subclasses


def _setup(seed: int, views: bool = False):
    graphs, labels, subs = random_batch(seed)
    dims = EncoderDims(graphs[0].feature_dim, 3, hidden_dim=8, embed_dim=8, proj_dim=4)
    params = init_params(dims, seed)
    if views:
        rng = np.random.default_rng(seed + 1)
        pairs = [sample_view_pair(g, rng) for g in graphs]
        graphs = [a for a, _ in pairs] + [b for _, b in pairs]
        labels, subs = np.concatenate([labels, labels]), np.concatenate([subs, subs])
    return params, batch_graphs(graphs), labels, subs


def check_contrastive(which: str, seed: int = 0, tol: float = TOL) -> GradCheckReport:
    params, gb, labels, subs = _setup(seed, views=True)
    loss_fn = intra_loss if which == "intra" else inter_loss
    anchors = np.ones(len(labels), dtype=bool)

    def f():
        z = project(params, encode_batch(params, gb))
        return loss_fn(BatchView(z, labels, subs, anchors, DEFAULT_TAU))

    return grad_check(f, params.values(), step=STEP, tol=tol)


def check_classifier(seed: int = 0, tol: float = TOL) -> GradCheckReport:
    params, gb, labels, _ = _setup(seed)
    names = [n for n in params.names() if not n.startswith("proj.")]

    def f():
        return cross_entropy(classify(params, encode_batch(params, gb)), labels)

    return grad_check(f, [params[n] for n in names], step=STEP, tol=tol)


def run_gradient_suite(seed: int = 0, tol: float = TOL) -> list[SuiteResult]:
    results = []
    for name, fn in (("encode-project-intra", lambda: check_contrastive("intra", seed, tol)),
                     ("encode-project-inter", lambda: check_contrastive("inter", seed, tol)),
                     ("encode-classify-ce", lambda: check_classifier(seed, tol))):
        t0 = time.perf_counter()
        rep = fn()
        results.append(SuiteResult(name, rep, time.perf_counter() - t0))
    return results
