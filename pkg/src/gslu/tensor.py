"""
Tensor Engine
=============

Dense numpy-backed tensors with a reverse-mode gradient tape.

Operations run eagerly. When a ``GradientTape`` is active on the current
thread and at least one operand requires a gradient, the operation is
appended to the tape together with a closure mapping the output gradient
to operand gradients. ``backward`` walks the tape once, newest node first,
and accumulates (``+=``) into leaf ``.grad`` arrays.

Precision is 32-bit by default; ``precision(np.float64)`` switches tensor
creation to 64-bit for gradient checking.

Broadcasting is limited to leading-dimension expansion: a lower-rank operand
must match the trailing extents of the other one exactly.
"""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf

from .errors import DegenerateRowError, NumericError, ShapeError, TapeError

ArrayLike = Union[np.ndarray, float, int, Sequence]

_DEFAULT_DTYPE = np.float32
_local = threading.local()


def get_default_dtype():
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    if np.dtype(dtype) not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = np.dtype(dtype).type


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the dtype used for new tensors."""
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


class Tensor:
    """
    An n-dimensional array that may take part in a gradient tape.

    Tensors are immutable after creation; only ``grad`` changes, and only
    on leaves during backward.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_node")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        self.data = np.array(data, dtype=dtype or _DEFAULT_DTYPE)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._node: Optional[Tuple["GradientTape", int]] = None

    @classmethod
    def _wrap(cls, data: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = False
        out.name = None
        out._node = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{label})"


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class TapeNode:
    op: str
    output: Tensor
    parents: Tuple[Tensor, ...]
    backward_fn: BackwardFn


class GradientTape:
    """
    Append-only record of differentiable operations.

    Use as a context manager; tapes nest per thread and the innermost one
    records. A tape supports a single backward pass.
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self._consumed = False

    def __enter__(self) -> "GradientTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def record(self, op: str, output: Tensor, parents: Tuple[Tensor, ...], backward_fn: BackwardFn) -> None:
        output._node = (self, len(self.nodes))
        output.requires_grad = True
        self.nodes.append(TapeNode(op, output, parents, backward_fn))

    def backward(self, loss: Tensor) -> None:
        if loss.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._node is None or loss._node[0] is not self:
            raise TapeError("loss was not recorded on this tape")
        if self._consumed:
            raise TapeError("this tape has already been used for a backward pass")
        self._consumed = True

        pending = {loss._node[1]: np.ones_like(loss.data)}
        for index in range(loss._node[1], -1, -1):
            grad = pending.pop(index, None)
            if grad is None:
                continue
            node = self.nodes[index]
            for parent, parent_grad in zip(node.parents, node.backward_fn(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent._node is not None:
                    key = parent._node[1]
                    if key in pending:
                        pending[key] = pending[key] + parent_grad
                    else:
                        pending[key] = parent_grad
                elif parent.grad is None:
                    parent.grad = np.array(parent_grad, dtype=parent.data.dtype)
                else:
                    parent.grad += parent_grad


def _tape_stack() -> List[GradientTape]:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def current_tape() -> Optional[GradientTape]:
    stack = _tape_stack()
    return stack[-1] if stack else None


def backward(loss: Tensor) -> None:
    """
    Populate ``grad`` on every leaf reachable from ``loss``.

    Raises:
        TapeError: If ``loss`` is not a scalar recorded on a tape
    """
    if loss._node is None:
        raise TapeError("backward called on a tensor that no tape recorded")
    loss._node[0].backward(loss)


# -- helpers -------------------------------------------------------------------

def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _emit(op: str, data: np.ndarray, parents: Tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"{op} produced non-finite values")
    out = Tensor._wrap(data)
    tape = current_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        tape.record(op, out, parents, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum away leading dimensions that were expanded in the forward pass."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    return grad


def _check_trailing(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape:
        return
    small, big = (a, b) if a.ndim <= b.ndim else (b, a)
    if small.ndim == 0 or big.shape[big.ndim - small.ndim:] != small.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not compatible")


# -- elementwise -----------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_trailing("add", a, b)

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", a.data + b.data, (a, b), grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_trailing("mul", a, b)

    def grad_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit("mul", a.data * b.data, (a, b), grad_fn)


def scale(x: Tensor, factor: float) -> Tensor:
    return _emit("scale", x.data * x.data.dtype.type(factor), (x,), lambda g: (g * factor,))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    cdf = 0.5 * (1.0 + erf(x.data / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x.data * x.data) / np.sqrt(2.0 * np.pi)

    def grad_fn(g):
        return (g * (cdf + x.data * pdf),)

    return _emit("gelu", (x.data * cdf).astype(x.data.dtype), (x,), grad_fn)


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    return _emit("relu", np.where(positive, x.data, 0).astype(x.data.dtype), (x,),
                 lambda g: (g * positive,))


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout. Identity when ``rng`` is None (evaluation) or ``p`` is 0."""
    if rng is None or p <= 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return _emit("dropout", x.data * keep, (x,), lambda g: (g * keep,))


# -- reductions ----------------------------------------------------------------------

def sum_all(x: Tensor) -> Tensor:
    return _emit("sum", np.array(x.data.sum(), dtype=x.data.dtype), (x,),
                 lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean_all(x: Tensor) -> Tensor:
    n = x.size

    def grad_fn(g):
        return (np.full(x.shape, g / n, dtype=x.data.dtype),)

    return _emit("mean", np.array(x.data.mean(), dtype=x.data.dtype), (x,), grad_fn)


# -- linear algebra and layout ---------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product over the last two axes; leading axes of the higher-rank
    operand act as a batch.

    Raises:
        ShapeError: If the inner extents differ
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch extents differ, {a.shape} vs {b.shape}")

    def grad_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit("matmul", np.matmul(a.data, b.data), (a, b), grad_fn)


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    return _emit("transpose", np.swapaxes(x.data, -1, -2), (x,),
                 lambda g: (np.swapaxes(g, -1, -2),))


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    inverse = np.argsort(axes)
    return _emit("permute", np.transpose(x.data, axes), (x,),
                 lambda g: (np.transpose(g, inverse),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    original = x.shape
    try:
        data = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: {original} -> {tuple(shape)}: {e}")
    return _emit("reshape", data, (x,), lambda g: (g.reshape(original),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along ``axis``; gradients are split back along it."""
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {[t.shape for t in tensors]}: {e}")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", data, tuple(tensors), grad_fn)


def gather_rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Embedding lookup: rows of a 2-D table, repeated ids allowed."""
    index = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"gather_rows expects a 2-D table, got {table.shape}")
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise ShapeError(f"gather_rows: ids outside [0, {table.shape[0]})")

    def grad_fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, index, g)
        return (full,)

    return _emit("gather", table.data[index], (table,), grad_fn)


def pad_columns(x: Tensor, at: int, count: int) -> Tensor:
    """Insert ``count`` zero columns before column ``at`` of the last axis."""
    if count == 0:
        return x
    pad_shape = x.shape[:-1] + (count,)
    data = np.concatenate([x.data[..., :at], np.zeros(pad_shape, x.data.dtype), x.data[..., at:]], axis=-1)

    def grad_fn(g):
        return (np.concatenate([g[..., :at], g[..., at + count:]], axis=-1),)

    return _emit("pad_columns", data, (x,), grad_fn)


# -- normalization and attention primitives -----------------------------------------

def softmax_rows(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax over the last axis, stabilized by subtracting the row max.

    Args:
        x: Scores
        mask: Boolean array, True where an entry may receive probability;
              may omit leading dimensions of ``x``

    Raises:
        DegenerateRowError: If some row has no unmasked entry
    """
    scores = x.data
    if mask is not None:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), scores.shape)
        if not keep.any(axis=-1).all():
            raise DegenerateRowError("softmax row has every entry masked")
        scores = np.where(keep, scores, -np.inf)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (probs * (g - (g * probs).sum(axis=-1, keepdims=True)),)

    return _emit("softmax", probs.astype(x.data.dtype), (x,), grad_fn)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean and unit variance, then apply gamma and beta."""
    d = x.shape[-1]
    if d < 1 or gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_sigma = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_sigma

    def grad_fn(g):
        dxhat = g * gamma.data
        dx = inv_sigma * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                          - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        dgamma = (g * xhat).reshape(-1, d).sum(axis=0)
        dbeta = g.reshape(-1, d).sum(axis=0)
        return dx, dgamma, dbeta

    out = (xhat * gamma.data + beta.data).astype(x.data.dtype)
    return _emit("layer_norm", out, (x, gamma, beta), grad_fn)


def cross_entropy(logits: Tensor, targets: Sequence[int], mask: Optional[np.ndarray] = None,
                  weights: Optional[Sequence[float]] = None) -> Tensor:
    """
    Weighted sum of per-row negative log-likelihoods.

    Args:
        logits: [M, K] scores
        targets: [M] gold column per row; must be unmasked
        mask: Optional [M, K] boolean, True where a column is a real outcome;
              masked columns get zero probability and zero gradient
        weights: Optional [M] row weights (defaults to 1/M, i.e. the mean)

    Returns:
        Scalar loss tensor
    """
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects [M, K] logits, got {logits.shape}")
    m, k = logits.shape
    target = np.asarray(targets, dtype=np.int64)
    if target.shape != (m,) or (m and (target.min() < 0 or target.max() >= k)):
        raise ShapeError(f"cross_entropy: targets {target.shape} do not index logits {logits.shape}")
    w = np.full(m, 1.0 / max(m, 1)) if weights is None else np.asarray(weights, dtype=np.float64)
    scores = logits.data.astype(np.float64)
    if mask is not None:
        keep = np.asarray(mask, dtype=bool)
        if keep.shape != logits.shape:
            raise ShapeError(f"cross_entropy: mask {keep.shape} vs logits {logits.shape}")
        if not keep[np.arange(m), target].all():
            raise ShapeError("cross_entropy: a target column is masked")
        scores = np.where(keep, scores, -np.inf)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_z
    nll = -log_probs[np.arange(m), target]
    probs = np.exp(log_probs)

    def grad_fn(g):
        grad = probs.copy()
        grad[np.arange(m), target] -= 1.0
        grad *= w[:, None] * g
        return (grad.astype(logits.data.dtype),)

    loss = np.array((w * nll).sum(), dtype=logits.data.dtype)
    return _emit("cross_entropy", loss, (logits,), grad_fn)
