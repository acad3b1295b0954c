"""A small reverse-mode automatic differentiation engine over numpy arrays.

Every operation records its parents and a local backward rule returning one
gradient per parent. ``backward`` walks the recorded graph in reverse
topological order. All values are float64.
"""
from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, EmptySequenceError, SingularityError

DTYPE = np.float64
MASK_VALUE = -1e30  # finite stand-in for -inf in masked softmax

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def values(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        backward(self)

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


# ---------------------------------------------------------------------------
# Graph and backward pass
# ---------------------------------------------------------------------------


class Graph:
    """Topologically ordered record of the operations leading to ``output``."""

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

    def __len__(self) -> int:
        return len(self.nodes)

    def leaves(self) -> list[Tensor]:
        return [n for n in self.nodes if not n._parents]

    def backward(self, seed: np.ndarray | None = None) -> None:
        out = self.output
        grads: dict[int, np.ndarray] = {
            id(out): np.ones_like(out.data) if seed is None else np.asarray(seed, dtype=DTYPE)
        }
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every tracked leaf."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    Graph(loss).backward()


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), bw)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    return _node(a.data ** exponent, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return _node(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient is passed only where the input was in range."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _node(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def masked_fill(a, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is True with a constant."""
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    return _node(np.where(mask, value, a.data), (a,), lambda g: (np.where(mask, 0.0, g),))


def log1mexp(a) -> Tensor:
    """log(1 - exp(a)) for a < 0, evaluated without cancellation."""
    a = as_tensor(a)
    x = a.data
    if np.any(x >= 0):
        raise SingularityError("log(1 - exp(x)) is undefined for x >= 0 (probability 1)")
    small = x < -math.log(2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(small, np.log1p(-np.exp(np.where(small, x, -1.0))),
                       np.log(-np.expm1(np.where(small, -1.0, x))))
    return _node(out, (a,), lambda g: (g * (-1.0 / np.expm1(-x)),))


# ---------------------------------------------------------------------------
# Reductions and shape manipulation
# ---------------------------------------------------------------------------


def _expand_reduced(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    return _node(np.sum(a.data, axis=axis, keepdims=keepdims), (a,),
                 lambda g: (_expand_reduced(g, a.shape, axis, keepdims).copy(),))


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    return _node(np.mean(a.data, axis=axis, keepdims=keepdims), (a,),
                 lambda g: (_expand_reduced(g, a.shape, axis, keepdims) / n,))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def swap_last(a) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _node(a.data[index], (a,), bw)


def take_rows(weight, ids) -> Tensor:
    """Embedding lookup: ``weight[ids]`` with scatter-add backward."""
    weight = as_tensor(weight)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise IndexError(f"row id out of range [0, {weight.shape[0]})")

    def bw(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, weight.shape[-1]))
        return (full,)

    return _node(weight.data[ids], (weight,), bw)


def gather_last(a, index) -> Tensor:
    """Pick ``a[..., index[...]]``: one entry per leading position."""
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.int64)[..., None]

    def bw(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, idx, g[..., None], axis=-1)
        return (full,)

    return _node(np.take_along_axis(a.data, idx, axis=-1)[..., 0], (a,), bw)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _node(np.stack([t.data for t in tensors], axis=axis), tensors, bw)


# ---------------------------------------------------------------------------
# Linear algebra and normalisation
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    if b.ndim == 2 and a.ndim > 2:
        # shared weight: fold the batch axes so both products are single 2-D GEMMs
        lead = a.shape[:-1]

        def bw_flat(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
            gb = a.data.reshape(-1, a.shape[-1]).T @ g2 if b.requires_grad else None
            return ga, gb

        out = (a.data.reshape(-1, a.shape[-1]) @ b.data).reshape(lead + (b.shape[1],))
        return _node(out, (a, b), bw_flat)

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(a.data @ b.data, (a, b), bw)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[axis] == 0:
        raise DimensionError(f"softmax over empty axis {axis} of shape {a.shape}")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    return _node(out, (a,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[axis] == 0:
        raise DimensionError(f"log_softmax over empty axis {axis} of shape {a.shape}")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    probs = np.exp(out)
    return _node(out, (a,), lambda g: (g - probs * g.sum(axis=axis, keepdims=True),))


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    n = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv

    def bw(g):
        gxhat = g * gain.data
        gx = inv / n * (n * gxhat - gxhat.sum(axis=-1, keepdims=True)
                        - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True))
        return gx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)

    return _node(xhat * gain.data + bias.data, (x, gain, bias), bw)


def dropout(x, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rate <= 0.0 or rng is None:
        return as_tensor(x)
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, keep)


# ---------------------------------------------------------------------------
# Composite building blocks
# ---------------------------------------------------------------------------


def lstm_cell(x, h_prev, c_prev, w_ih, w_hh, bias) -> tuple[Tensor, Tensor]:
    """One LSTM step. Gate layout in the 4H axis is input, forget, candidate, output."""
    x, h_prev, c_prev = as_tensor(x), as_tensor(h_prev), as_tensor(c_prev)
    hidden = h_prev.shape[-1]
    if w_ih.shape != (x.shape[-1], 4 * hidden) or w_hh.shape != (hidden, 4 * hidden) \
            or c_prev.shape[-1] != hidden:
        raise DimensionError(
            f"lstm_cell dimensions disagree: x {x.shape}, h {h_prev.shape}, c {c_prev.shape}, "
            f"w_ih {w_ih.shape}, w_hh {w_hh.shape}")
    gates = matmul(x, w_ih) + matmul(h_prev, w_hh) + bias
    i = sigmoid(gates[..., :hidden])
    f = sigmoid(gates[..., hidden:2 * hidden])
    cand = tanh(gates[..., 2 * hidden:3 * hidden])
    o = sigmoid(gates[..., 3 * hidden:])
    c = f * c_prev + i * cand
    h = o * tanh(c)
    return h, c


def attention(query, keys, values, mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Dot-product attention of ``query`` over ``keys``.

    ``query`` is ``[..., d]`` (one query) or ``[..., T, d]`` (T queries against
    the same keys); ``keys`` is ``[..., L, d]`` and ``values`` ``[..., L, dv]``.
    ``mask`` marks valid key positions with True and must broadcast against
    the ``[..., T, L]`` score array (``[..., L]`` in the single-query form).
    Returns ``(context, weights)``.
    """
    query, keys, values = as_tensor(query), as_tensor(keys), as_tensor(values)
    if keys.shape[-2] == 0:
        raise EmptySequenceError("attention over an empty key sequence")
    single = query.ndim == keys.ndim - 1
    if single:
        query = reshape(query, query.shape[:-1] + (1, query.shape[-1]))
    scores = matmul(query, swap_last(keys))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if single:
            mask = mask[..., None, :]
        scores = masked_fill(scores, ~mask, MASK_VALUE)
    weights = softmax(scores, axis=-1)
    context = matmul(weights, values)
    if single:
        context = reshape(context, context.shape[:-2] + context.shape[-1:])
        weights = reshape(weights, weights.shape[:-2] + weights.shape[-1:])
    return context, weights


# ---------------------------------------------------------------------------
# Optimisation
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update with bias correction."""
    if len(state.m) != len(params):
        raise DimensionError(f"optimizer state holds {len(state.m)} slots for {len(params)} params")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if m.shape != p.shape:
            raise DimensionError(f"optimizer state shape {m.shape} != param shape {p.shape}")
        if g is None:
            g = np.zeros_like(p.data)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


@dataclass
class Adam:
    params: list[Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    state: AdamState = field(init=False)

    def __post_init__(self):
        self.params = list(self.params)
        self.state = AdamState.zeros_like(self.params)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state,
                  self.lr, self.beta1, self.beta2, self.eps)


def global_grad_norm(params: Iterable[Tensor]) -> float:
    return math.sqrt(sum(float((p.grad ** 2).sum()) for p in params if p.grad is not None))


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``."""
    norm = global_grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm
