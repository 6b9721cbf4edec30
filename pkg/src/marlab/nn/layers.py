"""Neural building blocks: dense, GRU cell, self-attention, encoder layer.

Layers hold named Parameters and expose forward() on 2-D tensors where each
row is one sample (or one agent).  Weights initialize uniformly in
+-1/sqrt(fan_in) from an explicit generator, so a seed reproduces a model
bit-exactly.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigError, ShapeError
from . import tensor as T
from .tensor import Parameter, Tensor


class TrainContext:
    """Carries what a training-mode forward pass needs for reproducible noise.

    Dropout draws from a stream keyed by (seed, layer id, step), so the same
    step of the same run produces the same masks no matter what ran before.
    """

    def __init__(self, seed: int, step: int):
        self.seed = seed
        self.step = step

    def dropout_rng(self, layer_name: str) -> np.random.Generator:
        from ..rng import stream

        return stream(self.seed, "dropout", layer_name, self.step)


class Module:
    """Minimal container: tracks parameters and child modules."""

    def __init__(self):
        self._params: list[Parameter] = []
        self._children: list[Module] = []

    def _register(self, child: "Module") -> "Module":
        self._children.append(child)
        return child

    def _param(self, data, name: str, group: str) -> Parameter:
        p = Parameter(data, name=name, group=group)
        self._params.append(p)
        return p

    def parameters(self) -> list[Parameter]:
        out = list(self._params)
        for c in self._children:
            out.extend(c.parameters())
        return out

    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def copy_from(self, other: "Module"):
        """Hard-copy parameter values from a module of identical structure."""
        mine, theirs = self.parameters(), other.parameters()
        if len(mine) != len(theirs):
            raise ShapeError("copy_from: parameter lists differ in length")
        for p, q in zip(mine, theirs):
            if p.data.shape != q.data.shape:
                raise ShapeError(f"copy_from: {p.name} shape {p.shape} != {q.shape}")
            p.data[...] = q.data


def _uniform_init(rng: np.random.Generator, rows: int, cols: int, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(rows, cols))


class Dense(Module):
    """Affine map y = x W^T + b with W of shape (out, in)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 name: str, group: str = "main", zero_init: bool = False):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        if zero_init:
            w = np.zeros((out_dim, in_dim))
            b = np.zeros((1, out_dim))
        else:
            w = _uniform_init(rng, out_dim, in_dim, in_dim)
            b = _uniform_init(rng, 1, out_dim, in_dim)
        self.weight = self._param(w, f"{name}.weight", group)
        self.bias = self._param(b, f"{name}.bias", group)

    def forward(self, x: Tensor) -> Tensor:
        if x.cols != self.in_dim:
            raise ShapeError(f"dense expects {self.in_dim} input columns, got {x.shape}")
        return T.affine(x, self.weight, self.bias)

    __call__ = forward


class GRUCell(Module):
    """Gated recurrent cell.

    z = sigmoid(x Wxz^T + h Whz^T + bz)
    r = sigmoid(x Wxr^T + h Whr^T + br)
    c = tanh(x Wxc^T + r * (h Whc^T) + bc)
    h' = (1 - z) * c + z * h
    """

    def __init__(self, in_dim: int, hidden_dim: int, rng: np.random.Generator,
                 name: str, group: str = "main"):
        super().__init__()
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim

        def wx(tag):
            return self._param(_uniform_init(rng, hidden_dim, in_dim, in_dim),
                               f"{name}.wx{tag}", group)

        def wh(tag):
            return self._param(_uniform_init(rng, hidden_dim, hidden_dim, hidden_dim),
                               f"{name}.wh{tag}", group)

        def bias(tag):
            return self._param(_uniform_init(rng, 1, hidden_dim, hidden_dim),
                               f"{name}.b{tag}", group)

        self.wxz, self.whz, self.bz = wx("z"), wh("z"), bias("z")
        self.wxr, self.whr, self.br = wx("r"), wh("r"), bias("r")
        self.wxc, self.whc, self.bc = wx("c"), wh("c"), bias("c")

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        if x.cols != self.in_dim:
            raise ShapeError(f"GRU expects {self.in_dim} input columns, got {x.shape}")
        if h.cols != self.hidden_dim:
            raise ShapeError(f"GRU expects hidden width {self.hidden_dim}, got {h.shape}")
        return T.gru_cell(x, h, self.wxz, self.whz, self.bz,
                          self.wxr, self.whr, self.br,
                          self.wxc, self.whc, self.bc)

    __call__ = forward


class LayerNorm(Module):
    def __init__(self, dim: int, name: str, group: str = "main", eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self._param(np.ones((1, dim)), f"{name}.gamma", group)
        self.beta = self._param(np.zeros((1, dim)), f"{name}.beta", group)

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm_rows(x, self.gamma, self.beta, self.eps)

    __call__ = forward


class Dropout(Module):
    """Train-mode-only dropout; its name keys the reproducible noise stream."""

    def __init__(self, rate: float, name: str):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.name = name

    def forward(self, x: Tensor, ctx: Optional[TrainContext]) -> Tensor:
        if ctx is None or self.rate == 0.0:
            return x
        return T.dropout(x, self.rate, ctx.dropout_rng(self.name))

    __call__ = forward


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over the rows of the input.

    An optional boolean mask (True = query row i may attend key j) forces
    exactly zero weight on disallowed pairs.  With sets > 1 the rows split
    into consecutive independent groups that never attend across groups;
    the mask then applies within every group.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator,
                 name: str, group: str = "main"):
        super().__init__()
        if dim % heads != 0:
            raise ConfigError(f"model dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.q_proj = self._register(Dense(dim, dim, rng, f"{name}.q", group))
        self.k_proj = self._register(Dense(dim, dim, rng, f"{name}.k", group))
        self.v_proj = self._register(Dense(dim, dim, rng, f"{name}.v", group))
        self.out_proj = self._register(Dense(dim, dim, rng, f"{name}.out", group))

    def forward(self, x: Tensor, mask: Optional[np.ndarray] = None,
                sets: int = 1, return_weights: bool = False):
        if x.cols != self.dim:
            raise ShapeError(f"attention expects width {self.dim}, got {x.shape}")
        q = self.q_proj(x)
        k = self.k_proj(x)
        v = self.v_proj(x)
        probs_out: Optional[list] = [] if return_weights else None
        ctx = T.set_attention(q, k, v, self.heads, sets, mask=mask,
                              probs_out=probs_out)
        out = self.out_proj(ctx)
        if return_weights:
            # one (rows, rows-per-set) matrix per head, sets stacked row-wise
            probs = probs_out[0]
            per_head = [np.concatenate(list(probs[:, h]), axis=0)
                        for h in range(self.heads)]
            return out, per_head
        return out

    __call__ = forward


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator,
                 name: str, group: str = "main"):
        super().__init__()
        self.fc1 = self._register(Dense(dim, hidden, rng, f"{name}.fc1", group))
        self.fc2 = self._register(Dense(hidden, dim, rng, f"{name}.fc2", group))

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(T.relu(self.fc1(x)))

    __call__ = forward


class EncoderLayer(Module):
    """Pre-normalization transformer encoder layer.

    x + Dropout(Attn(LN(x))), then y + Dropout(FFN(LN(y))).  Dropout fires
    only when a TrainContext is supplied; evaluation is deterministic.
    """

    def __init__(self, dim: int, heads: int, ffn_dim: int, dropout_rate: float,
                 rng: np.random.Generator, name: str, group: str = "main"):
        super().__init__()
        self.norm1 = self._register(LayerNorm(dim, f"{name}.norm1", group))
        self.attn = self._register(MultiHeadSelfAttention(dim, heads, rng, f"{name}.attn", group))
        self.drop1 = self._register(Dropout(dropout_rate, f"{name}.drop1"))
        self.norm2 = self._register(LayerNorm(dim, f"{name}.norm2", group))
        self.ffn = self._register(FeedForward(dim, ffn_dim, rng, f"{name}.ffn", group))
        self.drop2 = self._register(Dropout(dropout_rate, f"{name}.drop2"))

    def forward(self, x: Tensor, mask: Optional[np.ndarray] = None,
                sets: int = 1, ctx: Optional[TrainContext] = None) -> Tensor:
        a = T.add(x, self.drop1(self.attn(self.norm1(x), mask, sets=sets), ctx))
        return T.add(a, self.drop2(self.ffn(self.norm2(a)), ctx))

    __call__ = forward


