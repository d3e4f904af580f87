"""Hierarchical supervised contrastive losses and cross-entropy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

DEFAULT_TAU = 0.2
DEFAULT_BETA = 1.0


@dataclass
class BatchView:
    """Contrastive batch: real views are anchors, synthetic rows are not."""
    embeddings: Tensor
    labels: np.ndarray
    subclasses: np.ndarray
    anchors: np.ndarray
    tau: float = DEFAULT_TAU
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        self.subclasses = np.asarray(self.subclasses)
        self.anchors = np.asarray(self.anchors, dtype=bool)
        n = self.embeddings.shape[0]
        if not (len(self.labels) == len(self.subclasses) == len(self.anchors) == n):
            raise ValueError("labels, subclasses and anchor flags must match the embedding rows")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")

    def __len__(self) -> int:
        return self.embeddings.shape[0]

    @classmethod
    def build(cls, embeddings: Tensor, labels, subclasses, anchors=None, tau=DEFAULT_TAU,
              beta=DEFAULT_BETA, check_norm: bool = True) -> "BatchView":
        if anchors is None:
            anchors = np.ones(embeddings.shape[0], dtype=bool)
        if check_norm:
            norms = np.linalg.norm(embeddings.value, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-9):
                raise ValueError("contrastive embeddings must be unit-norm")
        return cls(embeddings, labels, subclasses, anchors, tau, beta)


def _masks(batch: BatchView):
    """Boolean (n×n) masks for A, P and Q over all rows."""
    n = len(batch)
    not_self = ~np.eye(n, dtype=bool)
    same_class = batch.labels[:, None] == batch.labels[None, :]
    # subclass ids are only meaningful within a class
    same_sub = same_class & (batch.subclasses[:, None] == batch.subclasses[None, :])
    return not_self, same_class & not_self, same_sub & not_self


def index_sets(batch: BatchView, i: int) -> tuple[set[int], set[int], set[int]]:
    if not 0 <= i < len(batch):
        raise IndexError(f"anchor {i} out of range")
    if not batch.anchors[i]:
        raise ValueError(f"row {i} is synthetic and cannot anchor")
    a, p, q = _masks(batch)
    return (set(np.flatnonzero(a[i]).tolist()), set(np.flatnonzero(p[i]).tolist()),
            set(np.flatnonzero(q[i]).tolist()))


def _similarities(batch: BatchView, rows: np.ndarray) -> Tensor:
    z = batch.embeddings
    return ad.scale(ad.matmul(ad.take_rows(z, rows), ad.transpose(z)), 1.0 / batch.tau)


def _supcon_term(batch: BatchView, positive: np.ndarray, candidates: np.ndarray):
    """Sum over anchors of -mean_{j in pos} log softmax_{a in cand}(s_ia)[j].

    ``positive`` and ``candidates`` are (n×n) masks; anchors with no positive
    contribute nothing. Returns (loss tensor, number of active anchors).
    """
    active = np.flatnonzero(batch.anchors & positive.any(axis=1))
    if len(active) == 0:
        return None, 0
    sims = _similarities(batch, active)
    pos = positive[active]
    weights = pos / pos.sum(axis=1, keepdims=True)
    lse = ad.log_sum_exp_row(sims, candidates[active])
    loss = ad.add(ad.sum_all(lse), ad.scale(ad.sum_all(ad.mul(sims, Tensor(weights))), -1.0))
    return loss, len(active)


def _zero(batch: BatchView) -> Tensor:
    # keeps the result attached so callers may always backward through it
    return ad.scale(ad.sum_all(batch.embeddings), 0.0)


def intra_loss(batch: BatchView) -> Tensor:
    """Subclass-level term: same-subclass rows are positives among all others."""
    if len(batch) < 2:
        raise ValueError("contrastive loss needs at least two rows")
    a, _, q = _masks(batch)
    loss, _ = _supcon_term(batch, q, a)
    return _zero(batch) if loss is None else loss


def inter_loss(batch: BatchView) -> Tensor:
    """Class-level term over different-subclass, same-class rows; same-subclass rows leave the pool."""
    if len(batch) < 2:
        raise ValueError("contrastive loss needs at least two rows")
    a, p, q = _masks(batch)
    loss, _ = _supcon_term(batch, p & ~q, a & ~q)
    return _zero(batch) if loss is None else loss


def per_anchor_intra(batch: BatchView) -> np.ndarray:
    """Intra term for each row (NaN where the row is not an active anchor)."""
    a, _, q = _masks(batch)
    out = np.full(len(batch), np.nan)
    s = batch.embeddings.value @ batch.embeddings.value.T / batch.tau
    for i in np.flatnonzero(batch.anchors):
        if q[i].any():
            row = s[i, a[i]]
            top = row.max()
            lse = top + np.log(np.exp(row - top).sum())
            out[i] = lse - s[i, q[i]].mean()
    return out


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean of -log softmax(logits)[label]; labels are 1-based."""
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, k = logits.shape
    if len(labels) != n:
        raise ValueError("one label per logit row required")
    if labels.min() < 1 or labels.max() > k:
        raise ValueError(f"labels must lie in [1, {k}]")
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels - 1] = 1.0
    lse = ad.log_sum_exp_row(logits)
    picked = ad.sum_all(ad.mul(logits, Tensor(onehot)))
    return ad.scale(ad.add(ad.sum_all(lse), ad.scale(picked, -1.0)), 1.0 / n)


@dataclass
class LossParts:
    total: Tensor
    ce: float
    intra: float
    inter: float


def joint_loss(batch: BatchView | None, logits: Tensor, labels, beta: float | None = None,
               use_ce: bool = True, use_intra: bool = True, use_inter: bool = True) -> LossParts:
    """Cross-entropy plus intra and beta-weighted inter contrastive terms."""
    beta = (batch.beta if batch is not None else DEFAULT_BETA) if beta is None else beta
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    terms = []
    ce_v = intra_v = inter_v = 0.0
    if use_ce:
        ce = cross_entropy(logits, labels)
        ce_v = ce.item()
        terms.append(ce)
    if batch is not None and use_intra:
        li = intra_loss(batch)
        intra_v = li.item()
        terms.append(li)
    if batch is not None and use_inter and beta > 0:
        le = inter_loss(batch)
        inter_v = le.item()
        terms.append(ad.scale(le, beta))
    if not terms:
        raise ValueError("every loss term is disabled")
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return LossParts(total, ce_v, intra_v, inter_v)
