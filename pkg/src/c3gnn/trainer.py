"""Training loop: CE warm-up, periodic reclustering, augmented views, mixup, Adam."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .augmentation import DEFAULT_RATIO, applicable, augment, sample_kind
from .contrastive import BatchView, joint_loss
from .encoder import (EncoderDims, EncoderParams, batch_graphs, classify, encode_batch,
                      init_params, predict, project)
from .graphdata import Dataset, Graph
from .subclassing import SubclassAssignment, mixup_plan, refresh_assignments, subclass_cap

log = logging.getLogger(__name__)

VARIANTS = ("full", "no-hscl", "no-ac", "no-smi")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 100
    warmup_epochs: int = 5
    refresh_interval: int = 10
    temperature: float = 0.2
    beta: float = 1.0
    delta: int = 10
    aug_ratio: float = DEFAULT_RATIO
    hscl: bool = True
    adaptive_refresh: bool = True
    mixup: bool = True
    two_stage: bool = False
    classifier_epochs: int = 20
    hidden_dim: int = 64
    embed_dim: int = 64
    proj_dim: int = 32
    num_layers: int = 2
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = ("learning_rate", "batch_size", "epochs", "refresh_interval", "temperature",
                    "delta", "hidden_dim", "embed_dim", "proj_dim", "num_layers")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.beta < 0:
            raise ConfigError("beta must be nonnegative")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError("warmup_epochs must lie in [0, epochs)")
        if not 0 < self.aug_ratio < 1:
            raise ConfigError("aug_ratio must lie in (0, 1)")
        if self.two_stage and self.classifier_epochs < 1:
            raise ConfigError("two_stage needs classifier_epochs >= 1")

    def with_variant(self, variant: str) -> "TrainConfig":
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
        flags = {"full": {}, "no-hscl": {"hscl": False}, "no-ac": {"adaptive_refresh": False},
                 "no-smi": {"mixup": False}}[variant]
        return dataclasses.replace(self, **flags)

    def dims(self, in_dim: int, num_classes: int) -> EncoderDims:
        return EncoderDims(in_dim, num_classes, self.hidden_dim, self.embed_dim, self.proj_dim,
                           self.num_layers)

    # flat key=value text

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {n}: unknown key {key!r}")
            kwargs[key] = _parse_value(types[key], val, key)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())


def _parse_value(typ, raw: str, key: str):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ}") from None


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: EncoderParams, state: AdamState, lr: float,
              names: Sequence[str] | None = None) -> None:
    """In-place Adam update from ``.grad`` of each named parameter.

    Parameters absent from ``names`` are left alone. Every listed parameter
    must carry a gradient.
    """
    names = params.names() if names is None else names
    state.step += 1
    t = state.step
    c1 = 1 - state.beta1 ** t
    c2 = 1 - state.beta2 ** t
    for name in names:
        p = params[name]
        if p.grad is None:
            raise ValueError(f"missing gradient for {name}")
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        p.value = p.value - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ---------------------------------------------------------------------------
# steps


@dataclass
class EpochMetrics:
    epoch: int
    ce: float
    intra: float
    inter: float
    val_top1: float
    num_batches: int = 0
    num_synthetic: float = 0.0

    def record(self) -> dict:
        return {"epoch": self.epoch, "L_CE": self.ce, "L_intra": self.intra,
                "L_inter": self.inter, "val_top1": self.val_top1}


def _rng(config: TrainConfig, epoch: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, epoch, stream])


def batch_indices(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled batches; the trailing partial batch is dropped unless it is the only one."""
    perm = rng.permutation(n)
    if n <= batch_size:
        return [perm]
    return [perm[i:i + batch_size] for i in range(0, n - batch_size + 1, batch_size)]


def _view(graph: Graph, kind, ratio, rng) -> Graph:
    return augment(graph, kind, ratio, rng) if applicable(graph, kind) else graph


def _ce_only_step(params, graphs, labels):
    logits = classify(params, encode_batch(params, graphs))
    return joint_loss(None, logits, labels)


def _classifier_step(params, graphs, labels):
    h = ad.Tensor(encode_batch(params, graphs).value)
    return joint_loss(None, classify(params, h), labels)


def contrastive_step(params: EncoderParams, graphs: Sequence[Graph], labels: np.ndarray,
                     subclasses: np.ndarray, config: TrainConfig, rng: np.random.Generator):
    """Build the 2B-view batch (plus mixup rows) and return (LossParts, BatchView)."""
    b = len(graphs)
    kind = sample_kind(rng)
    v1 = [_view(g, kind, config.aug_ratio, rng) for g in graphs]
    v2 = [_view(g, kind, config.aug_ratio, rng) for g in graphs]
    if config.two_stage:
        # encoder learns from contrast alone; the classifier is fit afterwards
        h = encode_batch(params, batch_graphs(v1 + v2))
        logits = None
        z = project(params, h)
    else:
        h = encode_batch(params, batch_graphs(list(graphs) + v1 + v2))
        logits = classify(params, ad.take_rows(h, np.arange(b)))
        z = project(params, ad.take_rows(h, np.arange(b, 3 * b)))
    view_labels = np.concatenate([labels, labels])
    view_subs = np.concatenate([subclasses, subclasses])
    anchors = np.ones(2 * b, dtype=bool)
    if config.mixup:
        plan = mixup_plan(view_labels, view_subs, rng)
        if plan:
            rows = np.repeat(np.arange(len(plan)), 2)
            cols = np.array([[i, j] for i, j, _ in plan]).reshape(-1)
            vals = np.array([[a, 1 - a] for _, _, a in plan]).reshape(-1)
            mix = sp.csr_matrix((vals, (rows, cols)), shape=(len(plan), 2 * b))
            z_mix = ad.row_l2_normalize(ad.spmm(mix, z))
            z = ad.concat_rows(z, z_mix)
            view_labels = np.concatenate([view_labels, view_labels[[i for i, _, _ in plan]]])
            view_subs = np.concatenate([view_subs, view_subs[[i for i, _, _ in plan]]])
            anchors = np.concatenate([anchors, np.zeros(len(plan), dtype=bool)])
    view = BatchView(z, view_labels, view_subs, anchors, config.temperature, config.beta)
    return joint_loss(view, logits, labels, config.beta, use_ce=not config.two_stage), view


def _encoder_names(params: EncoderParams) -> list[str]:
    return [n for n in params.names() if not n.startswith("cls.")]


def _classifier_names(params: EncoderParams) -> list[str]:
    return [n for n in params.names() if n.startswith("cls.")]


def train_epoch(train_set: Dataset, params: EncoderParams, assignment: SubclassAssignment | None,
                state: AdamState, config: TrainConfig, epoch: int,
                contrastive: bool = True, freeze_encoder: bool = False) -> EpochMetrics:
    """One pass over ``train_set``.

    CE-only when ``contrastive`` is off or hscl is disabled. ``freeze_encoder``
    fits only the classifier head on fixed graph embeddings.
    """
    use_contrast = contrastive and config.hscl and not freeze_encoder
    if use_contrast and assignment is None:
        raise ValueError("contrastive epoch needs a subclass assignment")
    graphs = [lg.graph for lg in train_set.graphs]
    labels = train_set.labels
    subs = assignment.subclass_ids() if use_contrast else None
    if freeze_encoder:
        names = _classifier_names(params)
    elif use_contrast and config.two_stage:
        names = _encoder_names(params)
    else:
        names = params.names()
    shuffle_rng = _rng(config, epoch, 0)
    step_rng = _rng(config, epoch, 1)
    sums = np.zeros(3)
    n_batches, n_synth = 0, 0
    for idx in batch_indices(len(graphs), config.batch_size, shuffle_rng):
        batch = [graphs[i] for i in idx]
        params.zero_grad()
        if use_contrast:
            parts, view = contrastive_step(params, batch, labels[idx], subs[idx], config, step_rng)
            n_synth += int((~view.anchors).sum())
        elif freeze_encoder:
            parts = _classifier_step(params, batch, labels[idx])
        else:
            parts = _ce_only_step(params, batch, labels[idx])
        if not math.isfinite(parts.total.item()):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        ad.backward(parts.total)
        for n in names:
            if params[n].grad is None:
                params[n].grad = np.zeros_like(params[n].value)
        adam_step(params, state, config.learning_rate, names)
        sums += (parts.ce, parts.intra, parts.inter)
        n_batches += 1
    means = sums / max(n_batches, 1)
    return EpochMetrics(epoch, float(means[0]), float(means[1]), float(means[2]), float("nan"),
                        n_batches, n_synth / max(n_batches, 1))


def warmup(train_set: Dataset, params: EncoderParams, config: TrainConfig,
           state: AdamState | None = None) -> list[EpochMetrics]:
    """CE-only epochs ``0 .. warmup_epochs - 1``."""
    state = state if state is not None else AdamState()
    return [train_epoch(train_set, params, None, state, config, e, contrastive=False)
            for e in range(config.warmup_epochs)]


def top1(params: EncoderParams, dataset: Dataset) -> float:
    if len(dataset) == 0:
        raise ValueError("empty evaluation set")
    return float(np.mean(predict(params, [lg.graph for lg in dataset.graphs]) == dataset.labels))


@dataclass
class FitResult:
    params: EncoderParams
    history: list[EpochMetrics]
    best_epoch: int
    assignment: SubclassAssignment | None
    refresh_epochs: list[int]

    def __iter__(self):
        return iter((self.params, self.history))


def fit(train_set: Dataset, val_set: Dataset, config: TrainConfig) -> FitResult:
    """Train from scratch and return the parameters with the best validation top-1.

    With ``two_stage`` the ``epochs`` budget trains the encoder and
    ``classifier_epochs`` more fit the classifier on the frozen encoder; the
    best epoch is then chosen among the classifier epochs only.
    """
    counts = train_set.class_counts()
    if min(counts.values()) < 1:
        raise ValueError("every class needs at least one training graph")
    params = init_params(config.dims(train_set.feature_dim, train_set.num_classes), config.seed)
    state = AdamState()
    cap = subclass_cap(min(counts.values()), config.delta)
    assignment = None
    refreshes = []
    history = []
    best_acc, best_epoch, best_state = -1.0, -1, None
    total = config.epochs + (config.classifier_epochs if config.two_stage else 0)
    for epoch in range(total):
        frozen = epoch >= config.epochs
        contrast = config.hscl and epoch >= config.warmup_epochs and not frozen
        if contrast:
            first = assignment is None
            due = config.adaptive_refresh and epoch % config.refresh_interval == 0
            if first or due:
                assignment = refresh_assignments(params, train_set, cap, epoch,
                                                 config.refresh_interval, None,
                                                 seed=[config.seed, epoch, 2])
                refreshes.append(epoch)
        m = train_epoch(train_set, params, assignment, state, config, epoch, contrastive=contrast,
                        freeze_encoder=frozen)
        m.val_top1 = top1(params, val_set)
        history.append(m)
        log.debug("epoch %d ce=%.4f intra=%.4f inter=%.4f val=%.4f", epoch, m.ce, m.intra,
                  m.inter, m.val_top1)
        eligible = frozen or not config.two_stage
        if eligible and m.val_top1 > best_acc:
            best_acc, best_epoch, best_state = m.val_top1, epoch, params.copy()
    return FitResult(best_state, history, best_epoch, assignment, refreshes)


def write_history(history: Sequence[EpochMetrics], path) -> None:
    with open(path, "w") as fh:
        for m in history:
            fh.write(json.dumps(m.record()) + "\n")


def read_history(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(ln) for ln in fh if ln.strip()]
