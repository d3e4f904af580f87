"""Evaluation metrics and intra/inter class and subclass feature distances."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .encoder import EncoderParams, embed_numpy, predict
from .graphdata import Dataset
from .subclassing import SubclassAssignment

REGIONS = ("many", "medium", "few")
DISTANCE_FIELDS = ("intra_class", "inter_class", "intra_subclass", "inter_subclass")


def top1_accuracy(params: EncoderParams, eval_set: Dataset) -> float:
    if len(eval_set) == 0:
        raise ValueError("empty evaluation set")
    pred = predict(params, [lg.graph for lg in eval_set.graphs])
    return float(np.mean(pred == eval_set.labels))


def per_class_recall(params: EncoderParams, eval_set: Dataset) -> dict[int, float]:
    pred = predict(params, [lg.graph for lg in eval_set.graphs])
    y = eval_set.labels
    return {c: float(np.mean(pred[y == c] == c)) for c in range(1, eval_set.num_classes + 1)
            if np.any(y == c)}


def balanced_accuracy(params: EncoderParams, eval_set: Dataset) -> float:
    """Mean per-class recall; equals top-1 on a class-balanced set."""
    return float(np.mean(list(per_class_recall(params, eval_set).values())))


def set_distance(z, S) -> float:
    """Mean Euclidean distance from ``z`` to the rows of ``S``."""
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    if S.shape[0] == 0 or S.size == 0:
        raise ValueError("set_distance: empty set")
    return float(np.linalg.norm(S - np.asarray(z, dtype=np.float64), axis=1).mean())


def class_regions(train_counts: dict[int, int]) -> dict[int, str]:
    """Top, middle and bottom thirds of classes by training count."""
    ranked = sorted(train_counts, key=lambda c: (-train_counts[c], c))
    k = len(ranked)
    bounds = [round(k * i / 3) for i in range(4)]
    out = {}
    for r, name in enumerate(REGIONS):
        for c in ranked[bounds[r]:bounds[r + 1]]:
            out[c] = name
    return out


@dataclass
class SampleDistances:
    graph_id: int
    label: int
    subclass: int
    region: str
    intra_class: float | None
    inter_class: float | None
    intra_subclass: float | None
    inter_subclass: float | None


@dataclass
class DistanceReport:
    samples: list[SampleDistances]
    split_classes: list[int] = field(default_factory=list)

    def mean(self, name: str, region: str | None = None, only_split: bool = False) -> float:
        vals = [getattr(s, name) for s in self.samples
                if getattr(s, name) is not None
                and (region is None or s.region == region)
                and (not only_split or s.label in self.split_classes)]
        return float(np.mean(vals)) if vals else float("nan")

    def summary(self) -> dict:
        out = {"all": {f: self.mean(f) for f in DISTANCE_FIELDS},
               "split_classes": {f: self.mean(f, only_split=True) for f in DISTANCE_FIELDS}}
        for r in REGIONS:
            out[r] = {f: self.mean(f, region=r) for f in DISTANCE_FIELDS}
        return out

    def write_records(self, path) -> None:
        with open(path, "w") as fh:
            for s in self.samples:
                fh.write(json.dumps(asdict(s)) + "\n")

    def histogram(self, bins: int = 20) -> str:
        """Gnuplot-friendly table: bin center followed by one count column per distance."""
        cols = {f: np.array([getattr(s, f) for s in self.samples if getattr(s, f) is not None])
                for f in DISTANCE_FIELDS}
        present = [c for c in cols.values() if len(c)]
        hi = max((c.max() for c in present), default=1.0) or 1.0
        edges = np.linspace(0.0, hi, bins + 1)
        centers = (edges[:-1] + edges[1:]) / 2
        counts = {f: np.histogram(c, bins=edges)[0] if len(c) else np.zeros(bins, int)
                  for f, c in cols.items()}
        lines = ["# center " + " ".join(DISTANCE_FIELDS)]
        for b in range(bins):
            lines.append(f"{centers[b]:.6g} " + " ".join(str(int(counts[f][b])) for f in DISTANCE_FIELDS))
        return "\n".join(lines) + "\n"


def distance_report_from_embeddings(h: np.ndarray, labels, subclasses, regions: dict[int, str],
                                    split_classes=()) -> DistanceReport:
    labels = np.asarray(labels)
    subclasses = np.asarray(subclasses)
    n = len(h)
    dist = np.sqrt(np.maximum(((h[:, None, :] - h[None, :, :]) ** 2).sum(axis=2), 0.0))
    samples = []
    for i in range(n):
        others = np.arange(n) != i
        p = others & (labels == labels[i])
        q = p & (subclasses == subclasses[i])
        neg = labels != labels[i]
        rest = p & ~q

        def mean_or_none(mask):
            return float(dist[i, mask].mean()) if mask.any() else None

        samples.append(SampleDistances(i, int(labels[i]), int(subclasses[i]), regions[int(labels[i])],
                                       mean_or_none(p), mean_or_none(neg), mean_or_none(q),
                                       mean_or_none(rest)))
    return DistanceReport(samples, sorted(split_classes))


def distance_report(params: EncoderParams, assignment: SubclassAssignment, eval_set: Dataset,
                    train_counts: dict[int, int] | None = None) -> DistanceReport:
    """Per-sample distances on pre-projection graph embeddings.

    Evaluation graphs take the subclass of the nearest center of their own class.
    """
    h = embed_numpy(params, [lg.graph for lg in eval_set.graphs])
    labels = eval_set.labels
    subs = np.array([assignment.nearest_subclass(int(c), h[i]) for i, c in enumerate(labels)])
    if train_counts is None:
        train_counts = {c: 0 for c in range(1, eval_set.num_classes + 1)}
        for c, _ in assignment.omega:
            train_counts[c] += 1
    split = [c for c in train_counts if assignment.num_subclasses(c) > 1]
    return distance_report_from_embeddings(h, labels, subs, class_regions(train_counts), split)
