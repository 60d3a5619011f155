"""Parameterised building blocks: linear maps, layer norm, attention, transformer blocks."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import numerics as nx
from .numerics import Parameter, SeededRng, Tensor


class Module:
    """Container that discovers parameters from its attributes in definition order."""

    training = False

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            yield from _walk(value, f"{prefix}{key}")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self, prefix: str = "") -> None:
        for name, p in self.named_parameters(prefix):
            p.name = name

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {arr.shape}")
            p.data[...] = arr

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def _walk(value, path):
    if isinstance(value, Parameter):
        yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(path + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{path}.{i}")


def init_normal(rng: SeededRng, shape, std: float) -> np.ndarray:
    return rng.normal(0.0, std, size=shape)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: SeededRng, bias: bool = True, zero: bool = False):
        std = 0.0 if zero else 1.0 / math.sqrt(d_in)
        self.w = Parameter(init_normal(rng, (d_in, d_out), std))
        self.b = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x) -> Tensor:
        y = nx.matmul(x, self.w)
        return y + self.b if self.b is not None else y


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(d))
        self.beta = Parameter(np.zeros(d))
        self._eps = eps

    def __call__(self, x) -> Tensor:
        return nx.layer_norm(x, self.gamma, self.beta, self._eps)


def causal_mask(n: int) -> np.ndarray:
    """Additive mask that blocks attention to later positions (large finite negative)."""
    return np.triu(np.full((n, n), -1e9), k=1)


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over (batch, tokens, d) inputs."""

    def __init__(self, d: int, heads: int, rng: SeededRng, zero_out: bool = False):
        if d % heads:
            raise ValueError(f"embedding dim {d} is not divisible by {heads} heads")
        self.wq = Linear(d, d, rng)
        self.wk = Linear(d, d, rng)
        self.wv = Linear(d, d, rng)
        self.wo = Linear(d, d, rng, zero=zero_out)
        self._heads = heads

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        b, t, d = x.shape
        h = self._heads
        dh = d // h

        def split(z):
            return z.reshape(b, t, h, dh).transpose(0, 2, 1, 3)

        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        scores = nx.matmul(q, nx.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dh))
        if mask is not None:
            scores = scores + mask
        att = nx.softmax(scores, axis=-1)
        out = nx.matmul(att, v).transpose(0, 2, 1, 3).reshape(b, t, d)
        return self.wo(out)


class TransformerBlock(Module):
    """Pre-norm encoder block: x + MHSA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, d: int, heads: int, rng: SeededRng, mlp_ratio: int = 2):
        self.ln1 = LayerNorm(d)
        self.attn = MultiHeadSelfAttention(d, heads, rng)
        self.ln2 = LayerNorm(d)
        self.fc1 = Linear(d, mlp_ratio * d, rng)
        self.fc2 = Linear(mlp_ratio * d, d, rng)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        x = x + self.attn(self.ln1(x), mask)
        return x + self.fc2(nx.gelu(self.fc1(self.ln2(x))))
