import math

import numpy as np
import pytest

from c3gnn import autodiff as ad
from c3gnn.autodiff import Tensor
from c3gnn.contrastive import (BatchView, cross_entropy, index_sets, inter_loss, intra_loss, joint_loss,
                               per_anchor_intra)
from oracles import mp_term, naive_supcon


def unit_rows(rng, n, d):
    z = rng.normal(size=(n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def batch(z, labels, subs, tau=0.2, anchors=None):
    return BatchView.build(Tensor(np.asarray(z, dtype=float)), labels, subs, anchors, tau=tau)


def test_identical_embeddings_give_ln3():
    z = np.tile([[0.6, 0.8]], (4, 1))
    for tau in (0.1, 0.5, 2.0):
        b = batch(z, [1] * 4, [0] * 4, tau)
        assert np.allclose(per_anchor_intra(b), math.log(3), atol=1e-12, rtol=0)
        assert intra_loss(b).item() == pytest.approx(4 * math.log(3), abs=1e-12)


def test_intra_hand_case_against_extended_precision():
    z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    b = batch(z, [1, 1, 1], [0, 1, 0], tau=0.5)
    oracle = float(mp_term(z, 0, [2], [1, 2], 0.5))
    assert oracle == pytest.approx(0.126928, abs=1e-6)
    assert abs(per_anchor_intra(b)[0] - oracle) <= 1e-12
    assert abs(per_anchor_intra(b)[0] - math.log1p(math.exp(-2))) <= 1e-12


def test_inter_hand_case():
    z = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    b = batch(z, [1, 1, 2], [0, 1, 2], tau=1.0)
    assert index_sets(b, 0) == ({1, 2}, {1}, set())
    # anchor 0 gives ln(1+e^-1); anchor 1 sees both candidates at similarity 0, so ln 2
    oracle = float(mp_term(z, 0, [1], [1, 2], 1.0) + mp_term(z, 1, [0], [0, 2], 1.0))
    assert float(mp_term(z, 0, [1], [1, 2], 1.0)) == pytest.approx(0.313262, abs=1e-6)
    assert inter_loss(b).item() == pytest.approx(oracle, abs=1e-12)


def test_index_sets_examples():
    b = batch(unit_rows(np.random.default_rng(0), 4, 3), [1, 1, 1, 2], [0, 0, 1, 2])
    a, p, q = index_sets(b, 0)
    assert (a, p, q) == ({1, 2, 3}, {1, 2}, {1})
    assert index_sets(b, 3) == ({0, 1, 2}, set(), set())
    with pytest.raises(IndexError):
        index_sets(b, 4)
    nb = batch(b.embeddings.value, b.labels, b.subclasses, anchors=[True, True, True, False])
    with pytest.raises(ValueError):
        index_sets(nb, 3)


def test_subclass_ids_are_scoped_to_class():
    z = unit_rows(np.random.default_rng(1), 2, 3)
    b = batch(z, [1, 2], [0, 0])
    assert index_sets(b, 0)[2] == set()


@pytest.mark.parametrize("seed", range(10))
def test_degenerate_subclassing_is_supcon(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 16))
    labels = rng.integers(1, 4, n)
    z = unit_rows(rng, n, 5)
    b = batch(z, labels, labels, tau=0.3)
    assert abs(intra_loss(b).item() - naive_supcon(z, labels, 0.3)) <= 1e-9
    assert inter_loss(b).item() == 0.0


def test_synthetic_rows_do_not_anchor_but_are_candidates():
    rng = np.random.default_rng(2)
    z = unit_rows(rng, 5, 3)
    anchors = [True, True, True, True, False]
    b = batch(z, [1] * 5, [0] * 5, anchors=anchors)
    per = per_anchor_intra(b)
    assert np.isnan(per[4]) and not np.isnan(per[:4]).any()
    assert intra_loss(b).item() == pytest.approx(per[:4].sum(), abs=1e-12)


def test_nonnegative_and_permutation_invariant():
    rng = np.random.default_rng(3)
    z = unit_rows(rng, 10, 4)
    labels = rng.integers(1, 3, 10)
    subs = rng.integers(0, 2, 10)
    b = batch(z, labels, subs)
    perm = rng.permutation(10)
    pb = batch(z[perm], labels[perm], subs[perm])
    for f in (intra_loss, inter_loss):
        assert f(b).item() >= 0
        assert f(b).item() == pytest.approx(f(pb).item(), abs=1e-10)


def test_inter_zero_without_other_subclasses():
    z = Tensor(unit_rows(np.random.default_rng(4), 4, 3), requires_grad=True)
    out = inter_loss(BatchView.build(z, [1, 1, 2, 2], [0, 0, 0, 0]))
    assert out.item() == 0.0
    ad.backward(out)
    assert not z.grad.any()


def test_build_rejects_non_unit_rows():
    with pytest.raises(ValueError):
        batch([[1.0, 1.0], [1.0, 0.0]], [1, 1], [0, 0])
    with pytest.raises(ValueError):
        batch([[1.0, 0.0], [1.0, 0.0]], [1, 1], [0, 0], tau=0.0)


def test_cross_entropy_values_and_errors():
    assert cross_entropy(Tensor(np.zeros((3, 4))), [1, 2, 4]).item() == pytest.approx(math.log(4), abs=1e-15)
    logits = Tensor([[2.0, 0.0]])
    assert cross_entropy(logits, [1]).item() == pytest.approx(math.log1p(math.exp(-2)), abs=1e-15)
    with pytest.raises(ValueError):
        cross_entropy(Tensor(np.zeros((2, 3))), [0, 1])
    with pytest.raises(ValueError):
        cross_entropy(Tensor(np.zeros((2, 3))), [1])


def test_joint_loss_is_linear_in_beta():
    rng = np.random.default_rng(5)
    z = unit_rows(rng, 8, 3)
    labels = np.array([1, 1, 1, 1, 2, 2, 2, 2])
    subs = np.array([0, 0, 1, 1, 2, 2, 3, 3])
    b = batch(z, labels, subs)
    logits = Tensor(rng.normal(size=(8, 2)))
    base = joint_loss(b, logits, labels, beta=0.0).total.item()
    one = joint_loss(b, logits, labels, beta=1.0).total.item()
    two = joint_loss(b, logits, labels, beta=2.0).total.item()
    assert two - base == pytest.approx(2 * (one - base), abs=1e-12)
    parts = joint_loss(b, logits, labels, beta=1.0)
    assert parts.total.item() == pytest.approx(parts.ce + parts.intra + parts.inter, abs=1e-12)
    only_ce = joint_loss(None, logits, labels)
    assert only_ce.total.item() == pytest.approx(parts.ce, abs=1e-15)
    with pytest.raises(ValueError):
        joint_loss(b, logits, labels, beta=-1.0)
