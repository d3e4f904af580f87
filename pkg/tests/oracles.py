"""Independent reference implementations used by the tests."""
import itertools
import math

import mpmath
import numpy as np


def naive_supcon(z, labels, tau):
    """Plain double loop: for each anchor, mean over positives of -log softmax over all others."""
    n, total = len(z), 0.0
    for i in range(n):
        pos = [p for p in range(n) if p != i and labels[p] == labels[i]]
        if not pos:
            continue
        denom = sum(math.exp(z[i] @ z[a] / tau) for a in range(n) if a != i)
        total += sum(-math.log(math.exp(z[i] @ z[p] / tau) / denom) for p in pos) / len(pos)
    return total


def mp_term(z, i, positives, candidates, tau):
    """Extended-precision single-anchor contrastive term."""
    mpmath.mp.dps = 50
    s = {a: mpmath.fsum(mpmath.mpf(float(u)) * mpmath.mpf(float(v)) for u, v in zip(z[i], z[a])) / tau
         for a in candidates}
    denom = mpmath.fsum(mpmath.e ** s[a] for a in candidates)
    return mpmath.fsum(-mpmath.log(mpmath.e ** s[p] / denom) for p in positives) / len(positives)


def exhaustive_capped_optimum(x, k, cap):
    """Minimum-SSE labeling into exactly k nonempty clusters of size <= cap, by enumeration."""
    best, best_labels = math.inf, None
    for labels in itertools.product(range(k), repeat=len(x)):
        sizes = np.bincount(labels, minlength=k)
        if sizes.min() == 0 or sizes.max() > cap:
            continue
        lab = np.array(labels)
        sse = sum(((x[lab == c] - x[lab == c].mean(axis=0)) ** 2).sum() for c in range(k))
        if sse < best - 1e-12:
            best, best_labels = sse, lab
    return best, best_labels


def as_partition(labels):
    labels = np.asarray(labels)
    return {frozenset(np.flatnonzero(labels == c).tolist()) for c in set(labels.tolist())}
