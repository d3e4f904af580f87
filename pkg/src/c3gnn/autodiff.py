"""Dense reverse-mode automatic differentiation over 2-D float64 arrays.

Every operation returns a new :class:`Tensor` that remembers its parents and a
closure propagating the upstream gradient to them. Calling :func:`backward` on
a scalar tensor sorts the recorded graph topologically, runs the closures in
reverse order and then frees the graph.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

NORM_EPS = 1e-12


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "_freed", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        arr = np.array(value, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
        self.value = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._freed = False
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ValueError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.value[0, 0])

    def numpy(self) -> np.ndarray:
        return self.value

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.value.copy())

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, scale(_wrap(other), -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(value: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise FloatingPointError("non-finite value produced by a primitive")
    out = Tensor.__new__(Tensor)
    out.value = value
    out.grad = None
    out.name = None
    out._freed = False
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dimensions differ {a.shape} @ {b.shape}")

    def bw(g):
        _accumulate(a, g @ b.value.T)
        _accumulate(b, a.value.T @ g)

    return _result(a.value @ b.value, (a, b), bw)


def spmm(op, a: Tensor) -> Tensor:
    """Left-multiply ``a`` by a constant (dense or scipy sparse) matrix."""
    if op.shape[1] != a.shape[0]:
        raise ValueError(f"spmm: inner dimensions differ {op.shape} @ {a.shape}")
    opT = op.T

    def bw(g):
        _accumulate(a, np.asarray(opT @ g))

    return _result(np.asarray(op @ a.value), (a,), bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a 1×n row broadcast over the rows of ``a``."""
    if a.shape == b.shape:
        def bw(g):
            _accumulate(a, g)
            _accumulate(b, g)
    elif b.shape[0] == 1 and b.shape[1] == a.shape[1]:
        def bw(g):
            _accumulate(a, g)
            _accumulate(b, g.sum(axis=0, keepdims=True))
    else:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return _result(a.value + b.value, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")

    def bw(g):
        _accumulate(a, g * b.value)
        _accumulate(b, g * a.value)

    return _result(a.value * b.value, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bw(g):
        _accumulate(a, g * c)

    return _result(a.value * c, (a,), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0

    def bw(g):
        _accumulate(a, g * mask)

    return _result(np.where(mask, a.value, 0.0), (a,), bw)


def transpose(a: Tensor) -> Tensor:
    def bw(g):
        _accumulate(a, g.T)

    return _result(a.value.T.copy(), (a,), bw)


def mean_rows(a: Tensor) -> Tensor:
    """Column-wise mean over rows: (m×n) -> (1×n)."""
    m = a.shape[0]
    if m == 0:
        raise ValueError("mean_rows: empty tensor")

    def bw(g):
        _accumulate(a, np.broadcast_to(g / m, a.shape))

    return _result(a.value.mean(axis=0, keepdims=True), (a,), bw)


def sum_all(a: Tensor) -> Tensor:
    def bw(g):
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _result(np.array([[a.value.sum()]]), (a,), bw)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"concat_rows: column counts differ {a.shape} vs {b.shape}")
    m = a.shape[0]

    def bw(g):
        _accumulate(a, g[:m])
        _accumulate(b, g[m:])

    return _result(np.vstack([a.value, b.value]), (a, b), bw)


def take_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)

    def bw(g):
        full = np.zeros_like(a.value)
        np.add.at(full, idx, g)
        _accumulate(a, full)

    return _result(a.value[idx], (a,), bw)


def row_l2_normalize(a: Tensor) -> Tensor:
    norms = np.sqrt((a.value ** 2).sum(axis=1, keepdims=True))
    if np.any(norms < NORM_EPS):
        raise ValueError("row_l2_normalize: zero row")
    y = a.value / norms

    def bw(g):
        # d(x/|x|) = (g - y (y·g)) / |x|
        _accumulate(a, (g - y * (y * g).sum(axis=1, keepdims=True)) / norms)

    return _result(y, (a,), bw)


def log_sum_exp_row(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Stabilized per-row log-sum-exp, optionally restricted to ``mask`` entries.

    Returns an (m×1) tensor. Every row must keep at least one entry.
    """
    if a.shape[1] == 0:
        raise ValueError("log_sum_exp_row: empty row")
    if mask is None:
        mask = np.ones(a.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape:
            raise ValueError(f"log_sum_exp_row: mask shape {mask.shape} != {a.shape}")
        if not np.all(mask.any(axis=1)):
            raise ValueError("log_sum_exp_row: empty row")
    x = np.where(mask, a.value, -np.inf)
    top = x.max(axis=1, keepdims=True)
    e = np.exp(x - top)
    s = e.sum(axis=1, keepdims=True)
    out = top + np.log(s)
    soft = e / s

    def bw(g):
        _accumulate(a, g * soft)

    return _result(out, (a,), bw)


# ---------------------------------------------------------------------------
# backward pass


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf with ``requires_grad`` reachable from ``loss``.

    The recorded graph is released afterwards; a second call raises.
    """
    if loss.shape != (1, 1):
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._freed:
        raise RuntimeError("backward called twice on the same graph")
    if not loss.requires_grad:
        raise RuntimeError("loss is detached from every parameter")
    order = _topological_order(loss)
    # interior nodes carry temporary grads; leaves keep theirs
    loss.grad = np.ones((1, 1))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in order:
        if node._backward is not None:
            node.grad = None
            node._backward = None
            node._parents = ()
            node._freed = True
    loss._freed = True


# ---------------------------------------------------------------------------
# finite-difference checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    passed: bool
    num_checked: int
    worst: tuple[int, tuple[int, int]] | None = None

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} max_rel_error={self.max_rel_error:.3e} tol={self.tol:.1e} entries={self.num_checked}"


def grad_check(
    f: Callable[[], Tensor] | Callable[[Tensor], Tensor],
    x: Tensor | Sequence[Tensor],
    step: float = 1e-6,
    tol: float = 1e-5,
    floor: float = 1e-3,
) -> GradCheckReport:
    """Compare analytic gradients of scalar ``f`` with central differences.

    ``x`` is a tensor (then ``f`` is called as ``f(x)``) or a sequence of
    tensors (then ``f`` takes no arguments and reads them by closure). Relative
    error per entry is ``|a - n| / max(|a|, |n|, floor)``.
    """
    single = isinstance(x, Tensor)
    inputs = [x] if single else list(x)
    call = (lambda: f(inputs[0])) if single else f

    for t in inputs:
        t.requires_grad = True
        t.grad = None
    try:
        loss = call()
        backward(loss)
    except (ValueError, RuntimeError, FloatingPointError):
        return GradCheckReport(float("inf"), tol, False, 0)
    analytic = [np.zeros_like(t.value) if t.grad is None else t.grad.copy() for t in inputs]

    worst_err, worst_at, count = 0.0, None, 0
    for k, t in enumerate(inputs):
        flat = t.value.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = call().item()
            flat[j] = orig - step
            down = call().item()
            flat[j] = orig
            numeric = (up - down) / (2 * step)
            a = analytic[k].reshape(-1)[j]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            count += 1
            if worst_at is None or err > worst_err:
                worst_err = err
                worst_at = (k, tuple(int(i) for i in np.unravel_index(j, t.shape)))
    for t in inputs:
        t.grad = None
    return GradCheckReport(worst_err, tol, bool(worst_err <= tol), count, worst_at)
