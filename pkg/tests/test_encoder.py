import numpy as np
import pytest

from c3gnn import autodiff as ad
from c3gnn.autodiff import Tensor, grad_check
from c3gnn.contrastive import cross_entropy
from c3gnn.encoder import (EncoderDims, batch_graphs, classify, encode, encode_batch, init_params,
                           load_checkpoint, node_embeddings, predict, project, save_checkpoint)
from c3gnn.graphdata import Graph


def identity_params(d):
    params = init_params(EncoderDims(d, 2, hidden_dim=d, embed_dim=d, proj_dim=d, num_layers=1))
    params["sage0.w_self"].value = np.eye(d)
    params["sage0.w_neigh"].value = np.eye(d)
    return params


def random_graph(rng, n, d=3, p=0.4):
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return Graph(n, tuple(edges), rng.normal(size=(n, d)))


def test_single_node_identity():
    x = np.array([[0.5, 2.0, 0.0]])
    h = encode(identity_params(3), Graph(1, (), x))
    assert np.array_equal(h.value, x)


def test_two_node_edge_doubles():
    # h_v = relu(x + mean of the single neighbour) = 2x
    x = np.array([0.25, 1.0, 3.0])
    h = encode(identity_params(3), Graph(2, ((0, 1),), np.vstack([x, x])))
    assert np.allclose(h.value, 2 * x, atol=0, rtol=0)


def test_permutation_invariance():
    rng = np.random.default_rng(0)
    params = init_params(EncoderDims(3, 2), seed=1)
    g = random_graph(rng, 7)
    perm = rng.permutation(7)
    inv = np.argsort(perm)
    # node perm[i] of the new graph is node i of the old one
    pg = Graph(7, tuple((int(perm[u]), int(perm[v])) for u, v in g.edges), g.node_features[inv])
    assert np.allclose(encode(params, g).value, encode(params, pg).value, atol=1e-13)


def test_duplicating_isolated_node_keeps_other_embeddings():
    rng = np.random.default_rng(2)
    params = init_params(EncoderDims(3, 2), seed=3)
    base = Graph(4, ((0, 1), (1, 2)), rng.normal(size=(4, 3)))
    dup = Graph(5, base.edges, np.vstack([base.node_features, base.node_features[3:4]]))
    a = node_embeddings(params, batch_graphs([base])).value
    b = node_embeddings(params, batch_graphs([dup])).value
    assert np.array_equal(a, b[:4])
    assert np.array_equal(b[3], b[4])


def test_batched_encoding_matches_single():
    rng = np.random.default_rng(4)
    params = init_params(EncoderDims(3, 2), seed=0)
    graphs = [random_graph(rng, n) for n in (1, 3, 6)]
    together = encode_batch(params, graphs).value
    alone = np.vstack([encode(params, g).value for g in graphs])
    assert np.allclose(together, alone, atol=1e-13)


def test_encode_errors():
    params = init_params(EncoderDims(3, 2))
    with pytest.raises(ValueError):
        encode(params, Graph(2, (), np.zeros((2, 4))))
    with pytest.raises(ValueError):
        encode_batch(params, [])


def test_project_unit_norm_and_deterministic():
    rng = np.random.default_rng(5)
    params = init_params(EncoderDims(3, 2), seed=5)
    h = Tensor(np.abs(rng.normal(size=(6, 64))))
    z = project(params, h).value
    assert np.allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-12)
    assert np.array_equal(project(params, Tensor(h.value[:1])).value[0],
                          project(params, Tensor(h.value[:1])).value[0])


def test_project_dimension_mismatch():
    with pytest.raises(ValueError):
        project(init_params(EncoderDims(3, 2)), Tensor(np.ones((1, 5))))


def test_gradient_through_project_and_encode():
    rng = np.random.default_rng(6)
    dims = EncoderDims(3, 2, hidden_dim=6, embed_dim=6, proj_dim=4)
    params = init_params(dims, seed=6)
    gb = batch_graphs([random_graph(rng, n) for n in (4, 5, 6)])
    w = Tensor(rng.normal(size=(3, 4)))

    def f():
        return ad.sum_all(ad.mul(project(params, encode_batch(params, gb)), w))

    report = grad_check(f, params.values(), tol=1e-4)
    assert report.passed, report


def test_classify_zero_weights_and_argmax():
    params = init_params(EncoderDims(3, 4))
    for name in ("cls.w1", "cls.w2"):
        params[name].value = np.zeros_like(params[name].value)
    logits = classify(params, Tensor(np.ones((2, 64)))).value
    assert np.array_equal(logits, np.zeros((2, 4)))
    params["cls.b2"].value = np.array([[0.0, 0.0, 5.0, 0.0]])
    assert list(predict(params, [Graph(1, (), np.ones((1, 3)))])) == [3]


def test_cross_entropy_gradient_check():
    rng = np.random.default_rng(7)
    params = init_params(EncoderDims(3, 3, hidden_dim=6, embed_dim=6, proj_dim=4), seed=7)
    gb = batch_graphs([random_graph(rng, n) for n in (3, 4, 5, 6)])
    labels = np.array([1, 2, 3, 1])
    names = [n for n in params.names() if not n.startswith("proj")]

    def f():
        return cross_entropy(classify(params, encode_batch(params, gb)), labels)

    assert grad_check(f, [params[n] for n in names], tol=1e-4).passed


def test_init_params_rules():
    dims = EncoderDims(5, 3)
    a, b = init_params(dims, seed=11), init_params(dims, seed=11)
    assert a.equals(b)
    assert not a.equals(init_params(dims, seed=12))
    for name, t in a.tensors.items():
        if name.endswith(("bias", "b1", "b2")):
            assert not t.value.any()
        else:
            fan_in, fan_out = t.shape
            assert np.abs(t.value).max() <= np.sqrt(6 / (fan_in + fan_out))
    with pytest.raises(ValueError):
        EncoderDims(0, 3)


def test_layer_shapes_chain():
    dims = EncoderDims(7, 3, hidden_dim=16, embed_dim=12, num_layers=3)
    params = init_params(dims)
    assert params["sage0.w_self"].shape == (7, 16)
    assert params["sage1.w_neigh"].shape == (16, 16)
    assert params["sage2.w_self"].shape == (16, 12)
    assert params["proj.w1"].shape == (12, 12)
    assert params["cls.w2"].shape == (16, 3)


def test_checkpoint_round_trip_is_byte_stable(tmp_path):
    params = init_params(EncoderDims(4, 3, num_layers=3), seed=9)
    save_checkpoint(params, tmp_path / "a.bin")
    back = load_checkpoint(tmp_path / "a.bin")
    assert back.equals(params)
    save_checkpoint(back, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    raw = (tmp_path / "a.bin").read_bytes()
    assert raw[:8] == b"C3GNNCKP" and raw[8:12] == (1).to_bytes(4, "little")


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x.bin")
