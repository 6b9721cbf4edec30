"""Reverse-mode automatic differentiation over 2-D float64 arrays.

A Tensor wraps a numpy matrix and remembers how it was produced; calling
backward() on a scalar result accumulates exact gradients into every
reachable tensor with requires_grad set.  Only the operations the Q-learning
architecture needs are provided.  Shapes are always 2-D: vectors are rows.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import MaskError, ShapeError

DTYPE = np.float64

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph construction inside its body."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, exc_type, exc, tb):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _as_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=DTYPE)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D; got array of ndim {arr.ndim}")
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_matrix(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate gradients of this (scalar) tensor into the graph."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a 1x1 tensor, got {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the module-level functions do the work.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """A trainable tensor with a name and an optimizer group.

    Each parameter belongs to exactly one group: "main" covers the agent
    networks and the mixer, "comm" covers the communication stack, which
    is trained by its own optimizer.
    """

    __slots__ = ("name", "group")

    def __init__(self, data, name: str, group: str = "main"):
        if group not in ("main", "comm"):
            raise ValueError(f"unknown parameter group {group!r}")
        super().__init__(data, requires_grad=True)
        self.name = name
        self.group = group

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, group={self.group!r})"


def _const(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward()
    else:
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        # Own the buffer: g may be a view of another tensor's gradient.
        t.grad = np.array(g)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    ra, ca = a.shape
    rb, cb = b.shape
    if (ra != rb and 1 not in (ra, rb)) or (ca != cb and 1 not in (ca, cb)):
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


def add(a: Tensor, b) -> Tensor:
    a, b = _const(a), _const(b)
    _check_broadcast(a, b, "add")
    data = a.data + b.data

    def make():
        def backward(g):
            _accum(a, _unbroadcast(g, a.shape))
            _accum(b, _unbroadcast(g, b.shape))

        return backward

    return _result(data, (a, b), make)


def sub(a: Tensor, b) -> Tensor:
    a, b = _const(a), _const(b)
    _check_broadcast(a, b, "sub")
    data = a.data - b.data

    def make():
        def backward(g):
            _accum(a, _unbroadcast(g, a.shape))
            _accum(b, _unbroadcast(-g, b.shape))

        return backward

    return _result(data, (a, b), make)


def mul(a: Tensor, b) -> Tensor:
    a, b = _const(a), _const(b)
    _check_broadcast(a, b, "mul")
    data = a.data * b.data

    def make():
        def backward(g):
            _accum(a, _unbroadcast(g * b.data, a.shape))
            _accum(b, _unbroadcast(g * a.data, b.shape))

        return backward

    return _result(data, (a, b), make)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    data = a.data * c

    def make():
        def backward(g):
            _accum(a, g * c)

        return backward

    return _result(data, (a,), make)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def make():
        def backward(g):
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)

        return backward

    return _result(data, (a, b), make)


def transpose(a: Tensor) -> Tensor:
    data = a.data.T.copy()

    def make():
        def backward(g):
            _accum(a, g.T)

        return backward

    return _result(data, (a,), make)


def tsum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    if axis is None:
        data = a.data.sum().reshape(1, 1)
    else:
        data = a.data.sum(axis=axis, keepdims=True)

    def make():
        def backward(g):
            _accum(a, np.broadcast_to(g, a.shape))

        return backward

    return _result(data, (a,), make)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def make():
        pos = a.data > 0

        def backward(g):
            _accum(a, g * pos)

        return backward

    return _result(data, (a,), make)


def sigmoid(a: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-a.data))

    def make():
        def backward(g):
            _accum(a, g * data * (1.0 - data))

        return backward

    return _result(data, (a,), make)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def make():
        def backward(g):
            _accum(a, g * (1.0 - data * data))

        return backward

    return _result(data, (a,), make)


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    pos = a.data > 0
    data = np.where(pos, a.data, alpha * np.expm1(a.data))

    def make():
        def backward(g):
            _accum(a, g * np.where(pos, 1.0, data + alpha))

        return backward

    return _result(data, (a,), make)


def absolute(a: Tensor) -> Tensor:
    data = np.abs(a.data)

    def make():
        sgn = np.sign(a.data)

        def backward(g):
            _accum(a, g * sgn)

        return backward

    return _result(data, (a,), make)


def square(a: Tensor) -> Tensor:
    data = a.data * a.data

    def make():
        def backward(g):
            _accum(a, 2.0 * g * a.data)

        return backward

    return _result(data, (a,), make)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    data = a.data[:, start:stop].copy()

    def make():
        def backward(g):
            if a.requires_grad:
                if a.grad is None:
                    a.grad = np.zeros_like(a.data)
                a.grad[:, start:stop] += g

        return backward

    return _result(data, (a,), make)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    rows = parts[0].rows
    for p in parts:
        if p.rows != rows:
            raise ShapeError("concat_cols: row counts differ")
    data = np.concatenate([p.data for p in parts], axis=1)

    def make():
        widths = [p.cols for p in parts]

        def backward(g):
            j = 0
            for p, w in zip(parts, widths):
                _accum(p, g[:, j : j + w])
                j += w

        return backward

    return _result(data, tuple(parts), make)


def gather_cols(a: Tensor, index: np.ndarray) -> Tensor:
    """Pick one column per row: out[i, 0] = a[i, index[i]]."""
    index = np.asarray(index, dtype=np.intp)
    if index.shape != (a.rows,):
        raise ShapeError(f"gather_cols: index shape {index.shape} != ({a.rows},)")
    rows = np.arange(a.rows)
    data = a.data[rows, index].reshape(-1, 1)

    def make():
        def backward(g):
            if a.requires_grad:
                if a.grad is None:
                    a.grad = np.zeros_like(a.data)
                np.add.at(a.grad, (rows, index), g[:, 0])

        return backward

    return _result(data, (a,), make)


def softmax_rows(a: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Row-wise softmax; masked-out entries get exactly zero weight.

    mask is a boolean array (True = allowed).  A row with no allowed entry
    is degenerate and raises MaskError.
    """
    x = a.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"softmax mask shape {mask.shape} != input {x.shape}")
        if not mask.any(axis=1).all():
            raise MaskError("softmax row with every entry masked out")
        shifted = np.where(mask, x, -np.inf)
        m = shifted.max(axis=1, keepdims=True)
        e = np.exp(shifted - m)
        e = np.where(mask, e, 0.0)
    else:
        m = x.max(axis=1, keepdims=True)
        e = np.exp(x - m)
    data = e / e.sum(axis=1, keepdims=True)

    def make():
        def backward(g):
            dot = (g * data).sum(axis=1, keepdims=True)
            _accum(a, data * (g - dot))

        return backward

    return _result(data, (a,), make)


def layer_norm_rows(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization with learned scale and shift (both 1 x d)."""
    d = a.cols
    if gamma.shape != (1, d) or beta.shape != (1, d):
        raise ShapeError("layer_norm: gamma/beta must be 1 x d row vectors")
    mean = a.data.mean(axis=1, keepdims=True)
    var = a.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mean) * inv
    data = xhat * gamma.data + beta.data

    def make():
        def backward(g):
            _accum(beta, g.sum(axis=0, keepdims=True))
            _accum(gamma, (g * xhat).sum(axis=0, keepdims=True))
            dxhat = g * gamma.data
            row_mean = dxhat.mean(axis=1, keepdims=True)
            proj = (dxhat * xhat).mean(axis=1, keepdims=True)
            _accum(a, inv * (dxhat - row_mean - xhat * proj))

        return backward

    return _result(data, (a, gamma, beta), make)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability rate, scale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    data = a.data * keep

    def make():
        def backward(g):
            _accum(a, g * keep)

        return backward

    return _result(data, (a,), make)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fused dense map y = x W^T + b with W of shape (out, in), b (1, out)."""
    if x.cols != w.cols:
        raise ShapeError(f"affine: input {x.shape} does not match weight {w.shape}")
    data = x.data @ w.data.T + b.data

    def make():
        def backward(g):
            _accum(x, g @ w.data)
            _accum(w, g.T @ x.data)
            _accum(b, g.sum(axis=0, keepdims=True))

        return backward

    return _result(data, (x, w, b), make)


def gru_cell(x: Tensor, h: Tensor,
             wxz: Tensor, whz: Tensor, bz: Tensor,
             wxr: Tensor, whr: Tensor, br: Tensor,
             wxc: Tensor, whc: Tensor, bc: Tensor) -> Tensor:
    """Fused gated recurrent cell.

    z = sigmoid(x Wxz^T + h Whz^T + bz)
    r = sigmoid(x Wxr^T + h Whr^T + br)
    c = tanh(x Wxc^T + r * (h Whc^T) + bc)
    out = (1 - z) * c + z * h
    """
    xd, hd = x.data, h.data
    z = 1.0 / (1.0 + np.exp(-(xd @ wxz.data.T + hd @ whz.data.T + bz.data)))
    r = 1.0 / (1.0 + np.exp(-(xd @ wxr.data.T + hd @ whr.data.T + br.data)))
    u = hd @ whc.data.T
    c = np.tanh(xd @ wxc.data.T + r * u + bc.data)
    data = (1.0 - z) * c + z * hd

    def make():
        def backward(g):
            dc = g * (1.0 - z)
            dz = g * (hd - c)
            dac = dc * (1.0 - c * c)
            daz = dz * z * (1.0 - z)
            dr = dac * u
            dar = dr * r * (1.0 - r)
            du = dac * r
            _accum(x, daz @ wxz.data + dar @ wxr.data + dac @ wxc.data)
            _accum(h, g * z + daz @ whz.data + dar @ whr.data + du @ whc.data)
            _accum(wxz, daz.T @ xd)
            _accum(whz, daz.T @ hd)
            _accum(bz, daz.sum(axis=0, keepdims=True))
            _accum(wxr, dar.T @ xd)
            _accum(whr, dar.T @ hd)
            _accum(br, dar.sum(axis=0, keepdims=True))
            _accum(wxc, dac.T @ xd)
            _accum(whc, du.T @ hd)
            _accum(bc, dac.sum(axis=0, keepdims=True))

        return backward

    return _result(data, (x, h, wxz, whz, bz, wxr, whr, br, wxc, whc, bc), make)


def set_attention(q: Tensor, k: Tensor, v: Tensor, heads: int, sets: int,
                  mask: Optional[np.ndarray] = None,
                  probs_out: Optional[list] = None) -> Tensor:
    """Fused scaled dot-product attention over `sets` independent row groups.

    The first dimension splits into `sets` consecutive groups; attention runs
    within each group, never across.  mask is one boolean (n, n) matrix
    (True = query row may attend key row) applied inside every group.  If
    probs_out is a list, the (sets, heads, n, n) weight array is appended.
    """
    rows, dim = q.shape
    if rows % sets != 0:
        raise ShapeError(f"{rows} rows do not split into {sets} sets")
    n = rows // sets
    dk = dim // heads

    def split(t: np.ndarray) -> np.ndarray:
        return t.reshape(sets, n, heads, dk).transpose(0, 2, 1, 3)

    qh, kh, vh = split(q.data), split(k.data), split(v.data)
    scale_ = 1.0 / np.sqrt(dk)
    scores = np.einsum("shqd,shkd->shqk", qh, kh) * scale_
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (n, n):
            raise ShapeError(f"attention mask must be {n}x{n}, got {mask.shape}")
        if not mask.any(axis=1).all():
            raise MaskError("attention query row with every key masked out")
        scores = np.where(mask, scores, -np.inf)
    m = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - m)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    probs = e / e.sum(axis=-1, keepdims=True)
    if probs_out is not None:
        probs_out.append(probs.copy())
    ctx = np.einsum("shqk,shkd->shqd", probs, vh)
    data = ctx.transpose(0, 2, 1, 3).reshape(rows, dim)

    def make():
        def backward(g):
            gh = split(g)
            dv = np.einsum("shqk,shqd->shkd", probs, gh)
            dp = np.einsum("shqd,shkd->shqk", gh, vh)
            ds = probs * (dp - (dp * probs).sum(axis=-1, keepdims=True))
            dq = np.einsum("shqk,shkd->shqd", ds, kh) * scale_
            dk_ = np.einsum("shqk,shqd->shkd", ds, qh) * scale_

            def merge(t):
                return t.transpose(0, 2, 1, 3).reshape(rows, dim)

            _accum(q, merge(dq))
            _accum(k, merge(dk_))
            _accum(v, merge(dv))

        return backward

    return _result(data, (q, k, v), make)


def reshape(a: Tensor, rows: int, cols: int) -> Tensor:
    if rows * cols != a.data.size:
        raise ShapeError(f"cannot reshape {a.shape} to ({rows}, {cols})")
    data = a.data.reshape(rows, cols).copy()

    def make():
        def backward(g):
            _accum(a, g.reshape(a.shape))

        return backward

    return _result(data, (a,), make)


def block_row_matmul(q: Tensor, w: Tensor, n: int, k: int) -> Tensor:
    """Per-row matrix product: out[b] = q[b] @ w[b].reshape(n, k).

    q is (B, n); w is (B, n*k) holding a per-row mixing matrix.  Used by the
    state-conditioned mixer, where every sample gets its own weights.
    """
    bsz = q.rows
    if q.cols != n or w.shape != (bsz, n * k):
        raise ShapeError(f"block_row_matmul: got q {q.shape}, w {w.shape}, n={n}, k={k}")
    w3 = w.data.reshape(bsz, n, k)
    data = np.einsum("bi,bik->bk", q.data, w3)

    def make():
        def backward(g):
            _accum(q, np.einsum("bk,bik->bi", g, w3))
            _accum(w, np.einsum("bi,bk->bik", q.data, g).reshape(bsz, n * k))

        return backward

    return _result(data, (q, w), make)
