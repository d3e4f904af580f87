"""Capped k-means subclassing of majority classes and within-subclass mixup."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .encoder import EncoderParams, embed_numpy
from .graphdata import Dataset

MAX_ROUNDS = 100


@dataclass(frozen=True)
class SubclassAssignment:
    """Subclass label for every training graph plus per-class centers.

    ``omega[i]`` is ``(class, subclass)`` for training graph ``i``.
    """
    omega: tuple[tuple[int, int], ...]
    centers: dict[int, np.ndarray] = field(repr=False, compare=False)
    epoch_stamp: int
    cap: int

    def subclass_ids(self) -> np.ndarray:
        """Dense integer id per training graph, one id per distinct (class, subclass)."""
        keys = sorted(set(self.omega))
        pos = {k: i for i, k in enumerate(keys)}
        return np.array([pos[o] for o in self.omega], dtype=np.int64)

    def num_subclasses(self, c: int | None = None) -> int:
        keys = set(self.omega)
        if c is not None:
            keys = {k for k in keys if k[0] == c}
        return len(keys)

    def sizes(self) -> dict[tuple[int, int], int]:
        out: dict[tuple[int, int], int] = {}
        for o in self.omega:
            out[o] = out.get(o, 0) + 1
        return out

    def nearest_subclass(self, c: int, h: np.ndarray) -> int:
        centers = self.centers[c]
        return int(np.argmin(((centers - h) ** 2).sum(axis=1)))

    def to_table(self) -> str:
        lines = ["graph_id\tclass\tsubclass"]
        lines += [f"{i}\t{c}\t{s}" for i, (c, s) in enumerate(self.omega)]
        return "\n".join(lines) + "\n"


def subclass_cap(n_last: int, delta: int) -> int:
    """Upper bound on subclass size: max of the smallest class size and delta."""
    if n_last < 1 or delta < 1:
        raise ValueError("subclass cap needs positive n_K and delta")
    return max(n_last, delta)


@dataclass
class ClusterResult:
    labels: np.ndarray
    centers: np.ndarray
    sse_history: list[float]
    rounds: int


def _sse(x: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> float:
    return float(((x - centers[labels]) ** 2).sum())


def capped_assign(x: np.ndarray, centers: np.ndarray, cap: int) -> np.ndarray:
    """Greedy capacity-limited nearest-center assignment.

    Points are visited by ascending distance to their nearest center and each
    takes its nearest center that still has room. Empty clusters are then
    filled with the point farthest from its own center in a cluster of size >= 2.
    """
    n, k = len(x), len(centers)
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    order = np.lexsort((np.arange(n), d2.min(axis=1)))
    room = np.full(k, cap)
    labels = np.empty(n, dtype=np.int64)
    for i in order:
        for c in np.argsort(d2[i], kind="stable"):
            if room[c] > 0:
                labels[i] = c
                room[c] -= 1
                break
    sizes = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(sizes == 0):
        donors = np.flatnonzero(sizes[labels] >= 2)
        # prefer the donor point closest to the empty center
        i = donors[np.argmin(d2[donors, c])]
        sizes[labels[i]] -= 1
        labels[i] = c
        sizes[c] += 1
    return labels


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


def capped_kmeans(x: np.ndarray, k: int, cap: int, rng: np.random.Generator,
                  max_rounds: int = MAX_ROUNDS) -> ClusterResult:
    """Lloyd iterations with capped assignment; stops when labels stabilize.

    A round whose assignment would raise the SSE against the current centers
    is rejected, so the recorded SSE never increases.
    """
    centers = _kmeanspp(x, k, rng)
    labels = capped_assign(x, centers, cap)
    centers = np.array([x[labels == c].mean(axis=0) for c in range(k)])
    history = [_sse(x, labels, centers)]
    rounds = 1
    while rounds < max_rounds:
        new = capped_assign(x, centers, cap)
        if np.array_equal(new, labels) or _sse(x, new, centers) > _sse(x, labels, centers):
            break
        labels = new
        centers = np.array([x[labels == c].mean(axis=0) for c in range(k)])
        history.append(_sse(x, labels, centers))
        rounds += 1
    return ClusterResult(labels, centers, history, rounds)


def partition_class(embeddings: np.ndarray, cap: int, seed=0, n_init: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Split one class into ``ceil(N_c / cap)`` subclasses of size at most ``cap``.

    Returns (labels, centers). Classes no larger than ``cap`` come back whole.
    """
    x = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    n = len(x)
    if n < 1 or cap < 1:
        raise ValueError("partition_class needs at least one point and a positive cap")
    if n <= cap:
        return np.zeros(n, dtype=np.int64), x.mean(axis=0, keepdims=True)
    k = math.ceil(n / cap)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        res = capped_kmeans(x, k, cap, rng)
        if best is None or res.sse_history[-1] < best.sse_history[-1]:
            best = res
    return best.labels, best.centers


def assign_from_embeddings(h: np.ndarray, labels: Sequence[int], cap: int, epoch: int,
                           seed=0) -> SubclassAssignment:
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    omega = [None] * len(labels)
    centers = {}
    for c in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == c)
        sub, cen = partition_class(h[idx], cap, rng)
        centers[c] = cen
        for i, s in zip(idx, sub):
            omega[i] = (int(c), int(s))
    return SubclassAssignment(tuple(omega), centers, epoch, cap)


def refresh_assignments(params: EncoderParams, train_set: Dataset, cap: int, epoch: int,
                        interval: int, prev: SubclassAssignment | None, seed=0) -> SubclassAssignment:
    """Recluster on the current graph embeddings when ``epoch`` is a multiple of ``interval``."""
    if interval < 1:
        raise ValueError("refresh interval must be >= 1")
    if prev is not None and epoch % interval != 0:
        return prev
    h = embed_numpy(params, [lg.graph for lg in train_set.graphs])
    return assign_from_embeddings(h, train_set.labels, cap, epoch, seed)


# ---------------------------------------------------------------------------
# mixup


@dataclass(frozen=True)
class MixupSample:
    embedding: np.ndarray
    label: int
    subclass: int
    alpha: float
    parents: tuple[int, int]


def mixup_interpolate(z_i, z_j, alpha: float) -> np.ndarray:
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    if z_i.shape != z_j.shape:
        raise ValueError(f"mixup parents differ in shape {z_i.shape} vs {z_j.shape}")
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    return alpha * z_i + (1 - alpha) * z_j


def mixup_plan(labels, subclasses, rng: np.random.Generator) -> list[tuple[int, int, float]]:
    """One (i, j, alpha) per subclass with at least two batch members, in subclass order."""
    subclasses = np.asarray(subclasses)
    plan = []
    for s in sorted(set(subclasses.tolist())):
        members = np.flatnonzero(subclasses == s)
        if len(members) < 2:
            continue
        i, j = rng.choice(members, size=2, replace=False)
        if labels[i] != labels[j]:
            raise ValueError("subclass members disagree on class label")
        plan.append((int(i), int(j), float(rng.uniform(0.0, 1.0))))
    return plan


def synthesize_batch_samples(embeddings, labels, subclasses, rng_seed=0) -> list[MixupSample]:
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    z = np.asarray(embeddings, dtype=np.float64)
    out = []
    for i, j, alpha in mixup_plan(labels, subclasses, rng):
        mix = mixup_interpolate(z[i], z[j], alpha)
        mix = mix / np.linalg.norm(mix)
        out.append(MixupSample(mix, int(labels[i]), int(subclasses[i]), alpha, (i, j)))
    return out
