"""Autodiff engine: forward values and gradients against finite differences."""

import numpy as np
import pytest

from marlab.errors import MaskError, ShapeError
from marlab.nn import tensor as T
from marlab.nn import Parameter, Tensor, no_grad
from marlab.nn.gradcheck import finite_difference_gradient, relative_errors


def param(rng, rows, cols, name="p"):
    return Parameter(rng.standard_normal((rows, cols)), name=name)


def check_op(build_loss, params, step=1e-5, tol=1e-6):
    """build_loss() -> scalar Tensor; compares backward to central differences."""
    for p in params:
        p.grad = None
    loss = build_loss()
    loss.backward()
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = finite_difference_gradient(lambda: build_loss().item(), p, step=step)
        err = relative_errors(analytic, numeric).max()
        assert err <= tol, f"{p.name}: worst relative error {err}"


def test_shapes_normalized():
    assert Tensor(3.0).shape == (1, 1)
    assert Tensor([1.0, 2.0]).shape == (1, 2)
    with pytest.raises(ShapeError):
        Tensor(np.zeros((2, 2, 2)))


def test_matmul_shape_error_mentions_shapes():
    a, b = Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5)))
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        T.matmul(a, b)


def test_add_broadcast_bias_row():
    rng = np.random.default_rng(0)
    x = param(rng, 4, 3, "x")
    b = param(rng, 1, 3, "b")
    out = T.add(x, b)
    T.tsum(out).backward()
    assert np.allclose(b.grad, np.full((1, 3), 4.0))
    assert np.allclose(x.grad, np.ones((4, 3)))


@pytest.mark.parametrize("op", [T.relu, T.sigmoid, T.tanh, T.elu, T.absolute, T.square])
def test_unary_gradients(op):
    rng = np.random.default_rng(7)
    x = param(rng, 3, 4, "x")
    x.data += 0.05  # keep entries away from relu/abs kinks
    check_op(lambda: T.tsum(op(x)), [x])


def test_matmul_mul_chain_gradients():
    rng = np.random.default_rng(1)
    a = param(rng, 2, 3, "a")
    b = param(rng, 3, 4, "b")
    c = param(rng, 2, 4, "c")
    check_op(lambda: T.tsum(T.mul(T.matmul(a, b), c)), [a, b, c])


def test_softmax_rows_sums_to_one_and_grads():
    rng = np.random.default_rng(2)
    x = param(rng, 3, 5, "x")
    w = rng.standard_normal((3, 5))
    probs = T.softmax_rows(x)
    assert np.allclose(probs.data.sum(axis=1), 1.0)
    check_op(lambda: T.tsum(T.mul(T.softmax_rows(x), w)), [x])


def test_softmax_mask_exact_zero_and_renormalized():
    rng = np.random.default_rng(3)
    x = Tensor(rng.standard_normal((2, 4)))
    mask = np.array([[True, False, True, True], [True, True, True, True]])
    p = T.softmax_rows(x, mask)
    assert p.data[0, 1] == 0.0
    assert np.allclose(p.data.sum(axis=1), 1.0)


def test_softmax_fully_masked_row_raises():
    x = Tensor(np.zeros((2, 3)))
    mask = np.array([[True, True, True], [False, False, False]])
    with pytest.raises(MaskError):
        T.softmax_rows(x, mask)


def test_masked_softmax_gradients():
    rng = np.random.default_rng(4)
    x = param(rng, 3, 4, "x")
    w = rng.standard_normal((3, 4))
    mask = np.array([
        [True, True, False, True],
        [True, True, True, True],
        [False, True, True, False],
    ])
    check_op(lambda: T.tsum(T.mul(T.softmax_rows(x, mask), w)), [x])


def test_layer_norm_gradients():
    rng = np.random.default_rng(5)
    x = param(rng, 4, 6, "x")
    gamma = Parameter(rng.uniform(0.5, 1.5, (1, 6)), name="gamma")
    beta = param(rng, 1, 6, "beta")
    w = rng.standard_normal((4, 6))
    check_op(lambda: T.tsum(T.mul(T.layer_norm_rows(x, gamma, beta), w)),
             [x, gamma, beta], tol=1e-5)


def test_slice_concat_gather_gradients():
    rng = np.random.default_rng(6)
    x = param(rng, 3, 6, "x")
    idx = np.array([0, 3, 5])

    def loss():
        left = T.slice_cols(x, 0, 3)
        right = T.slice_cols(x, 3, 6)
        joined = T.concat_cols([T.tanh(left), right])
        return T.tsum(T.square(T.gather_cols(joined, idx)))

    check_op(loss, [x])


def test_block_row_matmul_matches_loop():
    rng = np.random.default_rng(8)
    q = param(rng, 5, 3, "q")
    w = param(rng, 5, 12, "w")
    out = T.block_row_matmul(q, w, n=3, k=4)
    expect = np.stack([q.data[b] @ w.data[b].reshape(3, 4) for b in range(5)])
    assert np.allclose(out.data, expect)
    check_op(lambda: T.tsum(T.square(T.block_row_matmul(q, w, 3, 4))), [q, w])


def test_dropout_statistics_and_scaling():
    rng = np.random.default_rng(9)
    x = Tensor(np.ones((100, 1000)))
    out = T.dropout(x, 0.25, rng)
    dropped = float((out.data == 0.0).mean())
    assert abs(dropped - 0.25) < 0.01
    kept = out.data[out.data != 0.0]
    assert np.allclose(kept, 1.0 / 0.75)


def test_no_grad_builds_no_graph():
    x = Parameter(np.ones((2, 2)), name="x")
    with no_grad():
        y = T.tsum(T.square(x))
    assert y._backward is None and not y.requires_grad


def test_grad_accumulates_across_uses():
    x = Parameter(np.array([[2.0]]), name="x")
    y = T.add(T.square(x), T.scale(x, 3.0))  # x^2 + 3x
    y.backward()
    assert np.allclose(x.grad, [[7.0]])
