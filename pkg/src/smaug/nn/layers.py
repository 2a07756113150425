"""Network building blocks: dense, GRU cell, multi-head attention, MLP.

All layers hold Parameters initialized uniformly in +-1/sqrt(fan_in) from a
caller-supplied numpy Generator, and expose named_parameters() for
checkpointing, target syncing and gradient checks.
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Sequence

import numpy as np

from .tensor import Parameter, ShapeMismatchError, Tensor, as_tensor, softmax

__all__ = ["Dense", "GruCell", "MultiHeadAttention", "Mlp"]


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Dense:
    """Affine layer y = x @ W.T + b with W of shape [out, in]."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 dtype=np.float32, name: str = "dense"):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Parameter(_uniform(rng, (out_dim, in_dim), in_dim, dtype),
                                name=f"{name}.weight")
        self.bias = Parameter(_uniform(rng, (out_dim,), in_dim, dtype),
                              name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise ShapeMismatchError(
                f"dense layer expects input dim {self.in_dim} "
                f"(weight {self.weight.shape}), got input shape {x.shape}"
            )
        return x @ self.weight.transpose((1, 0)) + self.bias

    def named_parameters(self) -> "OrderedDict[str, Parameter]":
        return OrderedDict([(self.weight.name, self.weight), (self.bias.name, self.bias)])


class GruCell:
    """Single-step GRU with fused gate matrices.

    Gate layout along the first axis of the fused matrices is
    (reset, update, candidate). With all parameters zero the update gate is
    0.5 and the candidate 0, so a zero hidden state is a fixed point.
    """

    def __init__(self, in_dim: int, hidden_dim: int, rng: np.random.Generator,
                 dtype=np.float32, name: str = "gru"):
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        h = hidden_dim
        self.w_ih = Parameter(_uniform(rng, (3 * h, in_dim), in_dim, dtype),
                              name=f"{name}.w_ih")
        self.w_hh = Parameter(_uniform(rng, (3 * h, h), h, dtype),
                              name=f"{name}.w_hh")
        self.b_ih = Parameter(_uniform(rng, (3 * h,), in_dim, dtype),
                              name=f"{name}.b_ih")
        self.b_hh = Parameter(_uniform(rng, (3 * h,), h, dtype),
                              name=f"{name}.b_hh")

    def __call__(self, x: Tensor, h_prev: Tensor) -> Tensor:
        x = as_tensor(x)
        h_prev = as_tensor(h_prev)
        if x.shape[-1] != self.in_dim or h_prev.shape[-1] != self.hidden_dim:
            raise ShapeMismatchError(
                f"gru step expects input dim {self.in_dim} and hidden dim "
                f"{self.hidden_dim}, got x {x.shape}, h {h_prev.shape}"
            )
        h = self.hidden_dim
        gi = x @ self.w_ih.transpose((1, 0)) + self.b_ih
        gh = h_prev @ self.w_hh.transpose((1, 0)) + self.b_hh
        reset = (gi[..., :h] + gh[..., :h]).sigmoid()
        update = (gi[..., h:2 * h] + gh[..., h:2 * h]).sigmoid()
        cand = (gi[..., 2 * h:] + reset * gh[..., 2 * h:]).tanh()
        return (1.0 - update) * cand + update * h_prev

    def named_parameters(self) -> "OrderedDict[str, Parameter]":
        return OrderedDict(
            (p.name, p) for p in (self.w_ih, self.w_hh, self.b_ih, self.b_hh)
        )


class MultiHeadAttention:
    """Dot-product attention with per-head softmax over a set of keys.

    Scores are ``temperature * (W_q q) . (W_k k)`` per head, without scale
    normalization; the output concatenates the heads' weighted value sums,
    giving n_heads * head_dim features.
    """

    def __init__(self, query_dim: int, key_dim: int, n_heads: int, head_dim: int,
                 rng: np.random.Generator, temperature: float = 1.0,
                 dtype=np.float32, name: str = "attn"):
        self.n_heads = n_heads
        self.head_dim = head_dim
        self.temperature = float(temperature)
        width = n_heads * head_dim
        self.w_q = Parameter(_uniform(rng, (width, query_dim), query_dim, dtype),
                             name=f"{name}.w_q")
        self.w_k = Parameter(_uniform(rng, (width, key_dim), key_dim, dtype),
                             name=f"{name}.w_k")
        self.w_v = Parameter(_uniform(rng, (width, key_dim), key_dim, dtype),
                             name=f"{name}.w_v")

    @property
    def out_dim(self) -> int:
        return self.n_heads * self.head_dim

    def __call__(self, query: Tensor, keys: Tensor, values: Tensor):
        """query [..., q_dim]; keys/values [..., K, key_dim].

        Returns (fused [..., n_heads*head_dim], weights [..., n_heads, K]).
        """
        query = as_tensor(query)
        keys = as_tensor(keys)
        values = as_tensor(values)
        if keys.shape[-2] == 0:
            raise ValueError("attention requires at least one key")
        hd, nh = self.head_dim, self.n_heads
        lead = query.shape[:-1]
        k = keys.shape[-2]

        qp = (query @ self.w_q.transpose((1, 0))).reshape(lead + (1, nh, hd))
        kp = (keys @ self.w_k.transpose((1, 0))).reshape(lead + (k, nh, hd))
        vp = (values @ self.w_v.transpose((1, 0))).reshape(lead + (k, nh, hd))

        scores = (qp * kp).sum(axis=-1) * self.temperature      # [..., K, H]
        perm = list(range(scores.ndim))
        perm[-2], perm[-1] = perm[-1], perm[-2]
        weights = softmax(scores.transpose(perm), axis=-1)       # [..., H, K]

        vperm = list(range(vp.ndim))
        vperm[-3], vperm[-2] = vperm[-2], vperm[-3]
        vh = vp.transpose(vperm)                                 # [..., H, K, D]
        fused = (weights.reshape(lead + (nh, k, 1)) * vh).sum(axis=-2)
        return fused.reshape(lead + (nh * hd,)), weights

    def from_lists(self, query: Tensor, keys: Sequence[Tensor], values: Sequence[Tensor]):
        """Attention over explicit per-key tensors of shape [..., key_dim]."""
        if len(keys) == 0:
            raise ValueError("attention requires at least one key")
        if len(keys) != len(values):
            raise ValueError(f"got {len(keys)} keys but {len(values)} values")
        from .tensor import stack
        return self(query, stack(keys, axis=-2), stack(values, axis=-2))

    def named_parameters(self) -> "OrderedDict[str, Parameter]":
        return OrderedDict((p.name, p) for p in (self.w_q, self.w_k, self.w_v))


class Mlp:
    """Dense stack with ReLU between layers and a linear head."""

    def __init__(self, dims: Sequence[int], rng: np.random.Generator,
                 dtype=np.float32, name: str = "mlp"):
        if len(dims) < 2:
            raise ValueError("mlp needs at least an input and output dim")
        self.layers = [
            Dense(dims[i], dims[i + 1], rng, dtype=dtype, name=f"{name}.{i}")
            for i in range(len(dims) - 1)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = layer(x).relu()
        return self.layers[-1](x)

    def named_parameters(self) -> "OrderedDict[str, Parameter]":
        out: "OrderedDict[str, Parameter]" = OrderedDict()
        for layer in self.layers:
            out.update(layer.named_parameters())
        return out
