"""Parameter containers and layers built on the autodiff engine."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError

INIT_SCALE = 0.1


def uniform_param(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape), requires_grad=True)


def zeros_param(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones_param(*shape: int) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


class Module:
    """Attribute-order parameter registry; nested modules get dotted names."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise DimensionError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=ad.DTYPE)
            if arr.shape != p.shape:
                raise DimensionError(f"{name}: stored shape {arr.shape} != parameter shape {p.shape}")
            p.data = arr.copy()


class Linear(Module):
    def __init__(self, rng, n_in: int, n_out: int, bias: bool = True):
        self.weight = uniform_param(rng, n_in, n_out)
        self.bias = zeros_param(n_out) if bias else None

    def __call__(self, x) -> Tensor:
        y = ad.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class Embedding(Module):
    def __init__(self, rng, n: int, dim: int):
        self.weight = uniform_param(rng, n, dim)

    def __call__(self, ids) -> Tensor:
        return ad.take_rows(self.weight, ids)


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gain = ones_param(dim)
        self.bias = zeros_param(dim)

    def __call__(self, x) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias)


class LSTMCell(Module):
    def __init__(self, rng, n_in: int, hidden: int):
        self.hidden = hidden
        self.w_ih = uniform_param(rng, n_in, 4 * hidden)
        self.w_hh = uniform_param(rng, hidden, 4 * hidden)
        self.bias = zeros_param(4 * hidden)

    def __call__(self, x, h, c):
        return ad.lstm_cell(x, h, c, self.w_ih, self.w_hh, self.bias)


class LSTMEncoder(Module):
    """Unidirectional LSTM over a right-padded batch; padded steps carry state."""

    def __init__(self, rng, n_in: int, hidden: int):
        self.cell = LSTMCell(rng, n_in, hidden)

    def __call__(self, x: Tensor, mask: np.ndarray):
        batch, length = mask.shape
        h = Tensor(np.zeros((batch, self.cell.hidden)))
        c = Tensor(np.zeros((batch, self.cell.hidden)))
        states = []
        full = mask.all(axis=0)
        for t in range(length):
            h_new, c_new = self.cell(x[:, t, :], h, c)
            if full[t]:
                h, c = h_new, c_new
            else:
                m = mask[:, t:t + 1].astype(float)
                h = h_new * m + h * (1.0 - m)
                c = c_new * m + c * (1.0 - m)
            states.append(h)
        return ad.stack(states, axis=1), (h, c)


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


class MultiHeadAttention(Module):
    def __init__(self, rng, dim: int, n_heads: int):
        if dim % n_heads:
            raise DimensionError(f"model dim {dim} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.q = Linear(rng, dim, dim)
        self.k = Linear(rng, dim, dim)
        self.v = Linear(rng, dim, dim)
        self.out = Linear(rng, dim, dim)

    def _split(self, x: Tensor) -> Tensor:
        b, t, d = x.shape
        return ad.transpose(ad.reshape(x, (b, t, self.n_heads, d // self.n_heads)), (0, 2, 1, 3))

    def __call__(self, x_q: Tensor, x_kv: Tensor, mask: np.ndarray | None):
        """``mask`` broadcasts to ``[B, heads, T, L]``; returns (output, weights)."""
        b, t, d = x_q.shape
        scale = 1.0 / math.sqrt(d // self.n_heads)
        q = self._split(self.q(x_q)) * scale
        k = self._split(self.k(x_kv))
        v = self._split(self.v(x_kv))
        ctx, weights = ad.attention(q, k, v, mask)
        merged = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (b, t, d))
        return self.out(merged), weights


class FeedForward(Module):
    def __init__(self, rng, dim: int, hidden: int):
        self.inner = Linear(rng, dim, hidden)
        self.outer = Linear(rng, hidden, dim)

    def __call__(self, x):
        return self.outer(ad.relu(self.inner(x)))


class TransformerEncoderLayer(Module):
    def __init__(self, rng, dim: int, n_heads: int, ff_dim: int):
        self.self_attn = MultiHeadAttention(rng, dim, n_heads)
        self.norm1 = LayerNorm(dim)
        self.ff = FeedForward(rng, dim, ff_dim)
        self.norm2 = LayerNorm(dim)

    def __call__(self, x, key_mask, dropout=0.0, rng=None):
        a, _ = self.self_attn(x, x, key_mask)
        x = self.norm1(x + ad.dropout(a, dropout, rng))
        return self.norm2(x + ad.dropout(self.ff(x), dropout, rng))


class TransformerDecoderLayer(Module):
    def __init__(self, rng, dim: int, n_heads: int, ff_dim: int):
        self.self_attn = MultiHeadAttention(rng, dim, n_heads)
        self.norm1 = LayerNorm(dim)
        self.cross_attn = MultiHeadAttention(rng, dim, n_heads)
        self.norm2 = LayerNorm(dim)
        self.ff = FeedForward(rng, dim, ff_dim)
        self.norm3 = LayerNorm(dim)

    def __call__(self, x, memory, self_mask, memory_mask, dropout=0.0, rng=None):
        a, _ = self.self_attn(x, x, self_mask)
        x = self.norm1(x + ad.dropout(a, dropout, rng))
        a, cross = self.cross_attn(x, memory, memory_mask)
        x = self.norm2(x + ad.dropout(a, dropout, rng))
        return self.norm3(x + ad.dropout(self.ff(x), dropout, rng)), cross
