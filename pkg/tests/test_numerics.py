import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hypomimia import numerics as nx
from hypomimia.errors import DegenerateVectorError, NumericError, ShapeError
from hypomimia.layers import TransformerBlock
from hypomimia.numerics import Adam, Parameter, SeededRng, Tensor, gradient_check


def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(nx.matmul(np.eye(2), a).data, a)


def test_matmul_hand_arithmetic():
    out = nx.matmul([[1.0, 2.0], [3.0, 4.0]], [[5.0], [6.0]])
    np.testing.assert_array_equal(out.data, [[17.0], [39.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        nx.matmul(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6))
def test_matmul_associative(seed, m, k, n, p):
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=(m, k)), rng.normal(size=(k, n)), rng.normal(size=(n, p))
    left = nx.matmul(nx.matmul(a, b), c).data
    right = nx.matmul(a, nx.matmul(b, c)).data
    scale = np.abs(a) @ np.abs(b) @ np.abs(c)
    assert np.all(np.abs(left - right) <= 1e-9 * np.maximum(scale, 1.0))


def test_softmax_uniform():
    np.testing.assert_allclose(nx.softmax(np.zeros(4)).data, [0.25] * 4, rtol=0, atol=1e-15)


def test_softmax_closed_form():
    np.testing.assert_allclose(nx.softmax([math.log(2.0), 0.0]).data, [2 / 3, 1 / 3], rtol=0, atol=1e-15)


def test_softmax_large_inputs_do_not_overflow():
    out = nx.softmax([1000.0, 0.0]).data
    assert out[0] == pytest.approx(1.0)
    assert out[1] == pytest.approx(0.0, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e3, 1e3)))
def test_softmax_sums_to_one(x):
    assert abs(nx.softmax(x).data.sum() - 1.0) <= 1e-12


def test_sigmoid_values():
    assert nx.sigmoid(0.0).item() == 0.5
    with np.errstate(all="raise"):
        assert nx.sigmoid(-800.0).item() == pytest.approx(0.0, abs=1e-300)
        assert nx.sigmoid(800.0).item() == 1.0


@given(st.floats(-50, 50))
def test_sigmoid_symmetry(x):
    assert nx.sigmoid(x).item() + nx.sigmoid(-x).item() == pytest.approx(1.0, abs=1e-15)


def test_cosine_similarity_cases():
    v = np.array([0.3, -1.2, 2.0])
    assert nx.cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-15)
    assert nx.cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert nx.cosine_similarity([1.0, 2.0], [2.0, 4.0]) == pytest.approx(1.0, abs=1e-15)


def test_cosine_similarity_zero_vector():
    with pytest.raises(DegenerateVectorError):
        nx.cosine_similarity([0.0, 0.0], [1.0, 1.0])


def test_non_finite_results_raise():
    with pytest.raises(NumericError):
        nx.exp(1000.0)
    with pytest.raises(NumericError):
        nx.log(0.0)


def test_gradient_check_quadratic():
    p = Parameter(np.random.default_rng(0).normal(size=(3, 4)))
    err = gradient_check(lambda: 0.5 * nx.tsum(p * p), [p], 1e-5)
    assert err < 1e-8
    np.testing.assert_allclose(p.grad, p.data)


def test_gradient_check_constant_loss():
    p = Parameter(np.ones(5))
    assert gradient_check(lambda: nx.Tensor(3.0), [p], 1e-5) == 0.0
    np.testing.assert_array_equal(p.grad, 0.0)


def test_gradient_check_rejects_bad_epsilon():
    p = Parameter(np.ones(2))
    with pytest.raises(ValueError):
        gradient_check(lambda: nx.tsum(p), [p], 1e-2)


def test_gradient_check_rejects_non_finite_loss():
    p = Parameter(np.ones(2))
    with pytest.raises(NumericError):
        gradient_check(lambda: Tensor(np.array(np.nan)), [p], 1e-5)


def test_gradient_check_transformer_block():
    rng = SeededRng(3)
    block = TransformerBlock(8, 2, rng)
    block_params = block.parameters()
    x = Tensor(rng.normal(size=(2, 5, 8)))
    w = rng.normal(size=(2, 5, 8))
    assert gradient_check(lambda: nx.tsum(block(x) * w), block_params, 1e-5) < 1e-4


@pytest.mark.parametrize(
    "fn",
    [
        lambda x: nx.tsum(nx.gelu(x)),
        lambda x: nx.tsum(nx.tanh(x) * nx.sigmoid(x)),
        lambda x: nx.tsum(nx.softmax(x, axis=0) * np.arange(12).reshape(3, 4)),
        lambda x: nx.tsum(nx.log_softmax(x, axis=1) * np.arange(12).reshape(3, 4)),
        lambda x: nx.tsum(nx.layer_norm(x, np.linspace(0.5, 2.0, 4), np.zeros(4)) * np.arange(12).reshape(3, 4)),
        lambda x: nx.tsum(nx.power(nx.concat([x, x * 2.0], axis=0)[1:4], 3.0)),
        lambda x: nx.tsum(nx.stack([x, x], axis=1) * 0.5) + nx.mean(nx.exp(x)),
        lambda x: nx.tsum(nx.l2_normalize(x) * np.arange(12).reshape(3, 4)),
        lambda x: nx.tsum(nx.sqrt(x * x + 1.0) / (x * x + 2.0)),
        lambda x: nx.tsum(nx.broadcast_to(nx.mean(x, axis=0), (5, 4)) * np.arange(20).reshape(5, 4)),
        lambda x: nx.tsum(x[np.array([0, 2, 2]), np.array([1, 1, 3])]),
    ],
)
def test_primitive_gradients(fn):
    p = Parameter(np.random.default_rng(5).normal(size=(3, 4)))
    assert gradient_check(lambda: fn(p), [p], 1e-6) < 1e-7


def test_cross_entropy_gradient():
    p = Parameter(np.random.default_rng(6).normal(size=(5, 4)))
    y = np.array([0, 3, 1, 1, 2])
    assert gradient_check(lambda: nx.cross_entropy(p, y), [p], 1e-6) < 1e-8


def test_seeded_rng_determinism():
    a, b = SeededRng(42), SeededRng(42)
    np.testing.assert_array_equal(a.normal(size=10), b.normal(size=10))
    np.testing.assert_array_equal(a.child("x", 1).uniform(size=5), b.child("x", 1).uniform(size=5))
    assert not np.array_equal(SeededRng(42).child("x").normal(size=5), SeededRng(42).child("y").normal(size=5))


def test_operations_are_bitwise_deterministic():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 7, 8))
    block = TransformerBlock(8, 2, SeededRng(1))
    assert np.array_equal(block(Tensor(x)).data, block(Tensor(x)).data)


def test_adam_minimises_quadratic():
    p = Parameter(np.array([3.0, -2.0]))
    opt = Adam([([p], 0.1)])
    for _ in range(500):
        opt.zero_grad()
        loss = nx.tsum(p * p)
        loss.backward()
        opt.step()
    assert np.all(np.abs(p.data) < 1e-2)


def test_parameter_gradient_shape_is_stable():
    p = Parameter(np.zeros((2, 3)))
    assert p.grad.shape == p.shape
    nx.tsum(p * 2.0).backward()
    assert p.grad.shape == p.shape
    np.testing.assert_array_equal(p.grad, 2.0)
