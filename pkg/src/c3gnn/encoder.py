"""GraphSAGE-style encoder with mean aggregation, mean readout and two MLP heads."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .graphdata import Graph

CKPT_MAGIC = b"C3GNNCKP"
CKPT_VERSION = 1


@dataclass(frozen=True)
class EncoderDims:
    in_dim: int
    num_classes: int
    hidden_dim: int = 64
    embed_dim: int = 64
    proj_dim: int = 32
    num_layers: int = 2

    def __post_init__(self):
        for name in ("in_dim", "num_classes", "hidden_dim", "embed_dim", "proj_dim", "num_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def layer_dims(self) -> list[tuple[int, int]]:
        sizes = [self.in_dim] + [self.hidden_dim] * (self.num_layers - 1) + [self.embed_dim]
        return list(zip(sizes[:-1], sizes[1:]))


class EncoderParams:
    """Named learnable tensors; iteration order is fixed by construction."""

    def __init__(self, dims: EncoderDims, tensors: dict[str, Tensor]):
        self.dims = dims
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def values(self) -> list[Tensor]:
        return list(self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.dims, {k: Tensor(v.value.copy(), requires_grad=True, name=k)
                                         for k, v in self.tensors.items()})

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.value.copy() for k, v in self.tensors.items()}

    def equals(self, other: "EncoderParams") -> bool:
        return self.dims == other.dims and self.names() == other.names() and all(
            np.array_equal(a.value, b.value) for a, b in zip(self.values(), other.values()))


def _param_shapes(dims: EncoderDims) -> list[tuple[str, tuple[int, int]]]:
    shapes = []
    for l, (din, dout) in enumerate(dims.layer_dims()):
        shapes += [(f"sage{l}.w_self", (din, dout)), (f"sage{l}.w_neigh", (din, dout)),
                   (f"sage{l}.bias", (1, dout))]
    d = dims.embed_dim
    shapes += [("proj.w1", (d, d)), ("proj.b1", (1, d)),
               ("proj.w2", (d, dims.proj_dim)), ("proj.b2", (1, dims.proj_dim)),
               ("cls.w1", (d, dims.hidden_dim)), ("cls.b1", (1, dims.hidden_dim)),
               ("cls.w2", (dims.hidden_dim, dims.num_classes)), ("cls.b2", (1, dims.num_classes))]
    return shapes


def init_params(dims: EncoderDims, seed: int = 0) -> EncoderParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, (rows, cols) in _param_shapes(dims):
        if name.endswith(("bias", ".b1", ".b2")):
            value = np.zeros((rows, cols))
        else:
            bound = np.sqrt(6.0 / (rows + cols))
            value = rng.uniform(-bound, bound, size=(rows, cols))
        tensors[name] = Tensor(value, requires_grad=True, name=name)
    return EncoderParams(dims, tensors)


# ---------------------------------------------------------------------------
# batching


@dataclass
class GraphBatch:
    """Several graphs stacked block-diagonally."""
    features: np.ndarray
    neighbor_mean: sp.csr_matrix
    readout: sp.csr_matrix
    num_graphs: int


def batch_graphs(graphs: Sequence[Graph]) -> GraphBatch:
    if not graphs:
        raise ValueError("empty graph batch")
    sizes = [g.num_nodes for g in graphs]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n = int(offsets[-1])
    rows, cols = [], []
    for g, off in zip(graphs, offsets[:-1]):
        if g.edges:
            e = np.asarray(g.edges, dtype=np.int64) + off
            rows.append(e[:, 0]); cols.append(e[:, 1])
            rows.append(e[:, 1]); cols.append(e[:, 0])
    if rows:
        r = np.concatenate(rows); c = np.concatenate(cols)
        deg = np.bincount(r, minlength=n).astype(np.float64)
        adj = sp.csr_matrix((1.0 / deg[r], (r, c)), shape=(n, n))
    else:
        adj = sp.csr_matrix((n, n))
    gid = np.repeat(np.arange(len(graphs)), sizes)
    pool = sp.csr_matrix((1.0 / np.repeat(sizes, sizes), (gid, np.arange(n))),
                         shape=(len(graphs), n))
    feats = np.vstack([g.node_features for g in graphs])
    return GraphBatch(feats, adj, pool, len(graphs))


# ---------------------------------------------------------------------------
# forward passes


def node_embeddings(params: EncoderParams, batch: GraphBatch) -> Tensor:
    """Final-layer node states for every node of the batch."""
    if batch.features.shape[1] != params.dims.in_dim:
        raise ValueError(f"feature dim {batch.features.shape[1]} != encoder input dim {params.dims.in_dim}")
    h = Tensor(batch.features)
    for l in range(params.dims.num_layers):
        self_term = ad.matmul(h, params[f"sage{l}.w_self"])
        neigh_term = ad.matmul(ad.spmm(batch.neighbor_mean, h), params[f"sage{l}.w_neigh"])
        h = ad.relu(ad.add(ad.add(self_term, neigh_term), params[f"sage{l}.bias"]))
    return h


def encode_batch(params: EncoderParams, graphs: Sequence[Graph] | GraphBatch) -> Tensor:
    """Graph embeddings h_G, one row per graph."""
    batch = graphs if isinstance(graphs, GraphBatch) else batch_graphs(graphs)
    return ad.spmm(batch.readout, node_embeddings(params, batch))


def encode(params: EncoderParams, graph: Graph) -> Tensor:
    return encode_batch(params, [graph])


def _mlp(params: EncoderParams, prefix: str, x: Tensor) -> Tensor:
    hidden = ad.relu(ad.add(ad.matmul(x, params[f"{prefix}.w1"]), params[f"{prefix}.b1"]))
    return ad.add(ad.matmul(hidden, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])


def _check_dim(params: EncoderParams, h: Tensor) -> None:
    if h.shape[1] != params.dims.embed_dim:
        raise ValueError(f"embedding dim {h.shape[1]} != {params.dims.embed_dim}")


def project(params: EncoderParams, h: Tensor) -> Tensor:
    """Unit-norm contrastive embedding for each row of ``h``."""
    _check_dim(params, h)
    return ad.row_l2_normalize(_mlp(params, "proj", h))


def classify(params: EncoderParams, h: Tensor) -> Tensor:
    _check_dim(params, h)
    return _mlp(params, "cls", h)


def embed_numpy(params: EncoderParams, graphs: Sequence[Graph], chunk: int = 256) -> np.ndarray:
    """h_G for many graphs as a plain array (no gradient bookkeeping kept)."""
    frozen = EncoderParams(params.dims, {k: Tensor(v.value) for k, v in params.tensors.items()})
    out = [encode_batch(frozen, graphs[i:i + chunk]).value for i in range(0, len(graphs), chunk)]
    return np.vstack(out)


def predict(params: EncoderParams, graphs: Sequence[Graph], chunk: int = 256) -> np.ndarray:
    """Predicted class labels in [1, K]."""
    frozen = EncoderParams(params.dims, {k: Tensor(v.value) for k, v in params.tensors.items()})
    preds = []
    for i in range(0, len(graphs), chunk):
        logits = classify(frozen, encode_batch(frozen, graphs[i:i + chunk])).value
        preds.append(np.argmax(logits, axis=1) + 1)
    return np.concatenate(preds)


# ---------------------------------------------------------------------------
# checkpoint: magic, version, dims, then (name, rows, cols, float64 LE data)*


def save_checkpoint(params: EncoderParams, path) -> None:
    d = params.dims
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<6I", d.in_dim, d.num_classes, d.hidden_dim, d.embed_dim,
                             d.proj_dim, d.num_layers))
        fh.write(struct.pack("<I", len(params.tensors)))
        for name, t in params.tensors.items():
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<2I", *t.shape))
            fh.write(np.ascontiguousarray(t.value, dtype="<f8").tobytes())


def load_checkpoint(path) -> EncoderParams:
    with open(path, "rb") as fh:
        if fh.read(8) != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        dims = EncoderDims(*struct.unpack("<6I", fh.read(24)))
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(count):
            (ln,) = struct.unpack("<I", fh.read(4))
            name = fh.read(ln).decode()
            rows, cols = struct.unpack("<2I", fh.read(8))
            data = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8").reshape(rows, cols)
            tensors[name] = Tensor(data.astype(np.float64), requires_grad=True, name=name)
    expected = [n for n, _ in _param_shapes(dims)]
    if list(tensors) != expected:
        raise ValueError(f"{path}: parameter names do not match the encoder layout")
    return EncoderParams(dims, tensors)
