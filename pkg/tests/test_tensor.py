"""Autodiff core: op semantics, backward correctness, determinism."""

import numpy as np
import pytest

from smaug import nn
from smaug.nn import Parameter, Tensor, as_tensor, no_grad
from smaug.nn.tensor import concat, log_softmax, softmax, stack, take_along_axis


def test_backward_linear_case():
    # loss = sum(w * x) with x fixed -> grad(w) = x
    x = np.array([1.5, -2.0, 3.0])
    w = Parameter(np.array([0.1, 0.2, 0.3]), name="w")
    loss = (w * as_tensor(x)).sum()
    loss.backward()
    np.testing.assert_allclose(w.grad, x)


def test_backward_quadratic_case():
    # loss = (w - 3)^2 at w=5 -> grad = 2*(5-3) = 4
    w = Parameter(np.array(5.0), name="w")
    loss = (w - 3.0).square()
    loss.backward()
    np.testing.assert_allclose(w.grad, 4.0)


def test_backward_requires_scalar():
    w = Parameter(np.ones(3), name="w")
    y = w * 2.0
    with pytest.raises(ValueError, match="scalar"):
        y.backward()


def test_backward_accumulates_into_grad():
    w = Parameter(np.array(2.0), name="w")
    (w * 3.0).backward()
    (w * 3.0).backward()
    np.testing.assert_allclose(w.grad, 6.0)


def test_composite_matches_finite_differences():
    # dense -> gru -> dense scalar loss, checked against central differences
    rng = np.random.default_rng(0)
    d1 = nn.Dense(3, 4, rng, dtype=np.float64, name="d1")
    gru = nn.GruCell(4, 5, rng, dtype=np.float64, name="g")
    d2 = nn.Dense(5, 1, rng, dtype=np.float64, name="d2")
    x = as_tensor(rng.normal(size=(7, 3)))
    h0 = Tensor(np.zeros((7, 5)))
    params = {}
    for m in (d1, gru, d2):
        params.update(m.named_parameters())

    def loss():
        return d2(gru(d1(x).tanh(), h0)).square().sum()

    report = nn.grad_check(params, loss, eps=1e-4, tolerance=1e-3)
    assert report.passed, report


def test_softmax_symmetry_and_value():
    out = softmax(as_tensor(np.zeros(3)), axis=-1)
    np.testing.assert_allclose(out.data, np.full(3, 1 / 3), atol=1e-12)
    # direct exponential computation
    x = np.array([1.0, 2.0, 3.0])
    expect = np.exp(x) / np.exp(x).sum()
    np.testing.assert_allclose(softmax(as_tensor(x), axis=-1).data, expect,
                               atol=1e-12)
    np.testing.assert_allclose(expect, [0.09003, 0.24473, 0.66524], atol=1e-4)


def test_softmax_overflow_stability():
    out = softmax(as_tensor(np.array([1000.0, 0.0])), axis=-1)
    assert np.all(np.isfinite(out.data))
    np.testing.assert_allclose(out.data, [1.0, 0.0], atol=1e-12)


def test_softmax_properties_random():
    # positive entries summing to one, over many dims
    rng = np.random.default_rng(1)
    for _ in range(1000):
        dim = int(rng.integers(1, 65))
        v = rng.normal(scale=10.0, size=dim)
        s = softmax(as_tensor(v), axis=-1).data
        assert np.all(s > 0)
        assert abs(s.sum() - 1.0) < 1e-6


def test_log_softmax_matches_log_of_softmax():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 6))
    np.testing.assert_allclose(
        log_softmax(as_tensor(x), axis=-1).data,
        np.log(softmax(as_tensor(x), axis=-1).data),
        atol=1e-12,
    )


def test_concat_stack_getitem_gradients():
    rng = np.random.default_rng(3)
    a = Parameter(rng.normal(size=(2, 3)), name="a")
    b = Parameter(rng.normal(size=(2, 2)), name="b")

    def loss():
        c = concat([a, b], axis=1)            # [2, 5]
        s = stack([c, c * 0.5], axis=0)       # [2, 2, 5]
        return s[:, :, 1:].square().sum()

    report = nn.grad_check({"a": a, "b": b}, loss, eps=1e-6, tolerance=1e-6)
    assert report.passed, report


def test_take_along_axis_accumulates_duplicates():
    w = Parameter(np.arange(6, dtype=np.float64).reshape(2, 3), name="w")
    idx = np.array([[0, 0], [2, 2]])
    out = take_along_axis(w, idx, axis=1)
    out.sum().backward()
    np.testing.assert_allclose(w.grad, [[2, 0, 0], [0, 0, 2]])


def test_matmul_shape_error_names_shapes():
    a = as_tensor(np.ones((2, 3)))
    b = as_tensor(np.ones((4, 2)))
    with pytest.raises(nn.ShapeMismatchError, match=r"\(2, 3\).*\(4, 2\)"):
        a @ b


def test_no_grad_blocks_graph():
    w = Parameter(np.array(2.0), name="w")
    with no_grad():
        y = w * 5.0
    assert y._backward is None and not y._parents
    z = w * 5.0
    assert z._parents


def test_forward_determinism_bit_identical():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(8, 5)).astype(np.float32)
    layer = nn.Dense(5, 7, np.random.default_rng(9), name="d")
    a = layer(as_tensor(x)).data
    b = layer(as_tensor(x)).data
    assert np.array_equal(a, b)


def test_finite_outputs_on_finite_inputs():
    rng = np.random.default_rng(5)
    for trial in range(25):
        r = np.random.default_rng(trial)
        gru = nn.GruCell(4, 6, r, name="g")
        x = as_tensor(rng.normal(scale=5.0, size=(3, 4)).astype(np.float32))
        h = as_tensor(rng.normal(scale=5.0, size=(3, 6)).astype(np.float32))
        out = gru(x, h)
        loss = out.square().sum()
        loss.backward()
        assert np.all(np.isfinite(out.data))
        for p in gru.named_parameters().values():
            assert p.grad is None or np.all(np.isfinite(p.grad))
