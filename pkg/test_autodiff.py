import threading

import numpy as np
import pytest

from oracles import finite_difference_gradient
from src.autodiff import (
    GradTape,
    Tensor,
    add,
    clamp,
    constant,
    exp,
    log,
    matmul,
    mean,
    mul,
    parameter,
    relu,
    row_norm,
    scale,
    shift,
    sigmoid,
    softmax,
    sub,
    take_columns,
    total,
    transpose,
)
from src.errors import DomainError, NonFiniteError, ParameterError, ShapeError
from src.model import Backbone, Dense, Head
from src.objectives import cross_entropy_supervised, one_hot

CONFIGS = range(10)


def tape_gradient(fn, x):
    p = parameter(x)
    with GradTape() as tape:
        out = fn(p)
    return tape.backward(out).of(p)


def check_gradient(fn, x, rtol=1e-4, atol=1e-8):
    x = np.asarray(x, dtype=np.float64)
    analytic = tape_gradient(fn, x)
    numeric = finite_difference_gradient(lambda v: fn(constant(v)).item(), x)
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)


def weighted(t, rng):
    """Random linear read-out so every entry of t gets a distinct gradient."""
    return total(mul(t, constant(rng.uniform(-1, 1, size=t.shape))))


def away_from_zero(rng, shape):
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.1, 1.0, size=shape)


# --- forward values -----------------------------------------------------------

def test_matmul_examples():
    out = matmul(constant(np.eye(2)), constant([[1, 2], [3, 4]]))
    np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])
    zero = matmul(constant([[1, 0], [0, 0]]), constant([[0, 0], [0, 1]]))
    np.testing.assert_array_equal(zero.data, np.zeros((2, 2)))


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        matmul(constant(np.ones((2, 3))), constant(np.ones((2, 3))))


def test_softmax_examples():
    np.testing.assert_allclose(softmax(constant([0.0, 0.0])).data, [0.5, 0.5])
    for tau in (0.3, 1.0, 7.0):
        np.testing.assert_allclose(softmax(constant([2.0, 2.0, 2.0]), tau).data, [1 / 3] * 3)
    direct = np.exp(np.array([2.0, 0.0]) / 2) / np.exp(np.array([2.0, 0.0]) / 2).sum()
    np.testing.assert_allclose(softmax(constant([2.0, 0.0]), 2.0).data, direct, rtol=0, atol=1e-12)


def test_softmax_is_stable_for_large_logits():
    out = softmax(constant([1000.0, 0.0]))
    assert np.all(np.isfinite(out.data))
    assert out.data[0] == pytest.approx(1.0)


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_softmax_rejects_non_positive_temperature(tau):
    with pytest.raises(ParameterError):
        softmax(constant([1.0, 2.0]), tau)


def test_elementwise_examples():
    np.testing.assert_array_equal(relu(constant([-1.0, 0.0, 2.0])).data, [0, 0, 2])
    np.testing.assert_allclose(log(exp(constant([0.5, 1.5]))).data, [0.5, 1.5], rtol=0, atol=1e-12)


def test_log_domain_and_overflow():
    with pytest.raises(DomainError):
        log(constant([1.0, 0.0]))
    with pytest.raises(NonFiniteError):
        exp(constant([1000.0]))


def test_clamp_rejects_inverted_bounds():
    with pytest.raises(ParameterError):
        clamp(constant([0.5]), 1.0, 0.0)


def test_tensor_contracts():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])
    with pytest.raises(ShapeError):
        Tensor(np.zeros((0, 3)))
    with pytest.raises(ShapeError):
        Tensor([1.0, 2.0]).item()


# --- backward -----------------------------------------------------------------

def test_square_gradient():
    assert tape_gradient(lambda x: mul(x, x), [3.0])[0] == pytest.approx(6.0)


def test_relu_subgradient_convention():
    np.testing.assert_array_equal(tape_gradient(lambda x: total(relu(x)), [-1.0, 2.0]), [0.0, 1.0])
    assert tape_gradient(lambda x: total(relu(x)), [0.0])[0] == 0.0


def test_gradient_of_constant_softmax_sum_is_zero():
    rng = np.random.default_rng(3)
    grad = tape_gradient(lambda x: total(softmax(x)), rng.normal(size=6))
    np.testing.assert_allclose(grad, np.zeros(6), atol=1e-10)


def test_backward_needs_scalar():
    p = parameter(np.ones(3))
    with GradTape() as tape:
        out = scale(p, 2.0)
    with pytest.raises(ShapeError):
        tape.backward(out)


def test_reused_tensor_accumulates_and_records_replay_in_reverse():
    p = parameter([2.0])
    with GradTape() as tape:
        a = mul(p, p)
        b = add(a, p)
        out = total(b)
    grads = tape.backward(out)
    assert grads.of(p)[0] == pytest.approx(5.0)
    assert tape.visited == sorted(tape.visited, reverse=True)
    assert len(tape.visited) == len(tape.records)


def test_ops_outside_a_tape_record_nothing():
    p = parameter([1.0, 2.0])
    with GradTape() as tape:
        pass
    total(mul(p, p))
    assert tape.records == []


def test_unreached_parameters_get_zero_gradient():
    p, q = parameter([1.0]), parameter([4.0])
    with GradTape() as tape:
        out = total(scale(p, 3.0))
    grads = tape.backward(out)
    assert q not in grads
    assert grads.of(q)[0] == 0.0


def test_tapes_are_thread_local():
    seen = {}

    def worker():
        p = parameter([1.0])
        with GradTape() as tape:
            total(mul(p, p))
        seen["worker"] = len(tape.records)

    with GradTape() as outer:
        thread = threading.Thread(target=worker)
        thread.start()
        thread.join()
    assert outer.records == []
    assert seen["worker"] == 2


# --- finite-difference agreement ----------------------------------------------

@pytest.mark.parametrize("seed", CONFIGS)
def test_matmul_gradients(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    check_gradient(lambda t: total(matmul(t, constant(b))), a)
    check_gradient(lambda t: total(matmul(constant(a), t)), b)


@pytest.mark.parametrize("seed", CONFIGS)
def test_shape_op_gradients(seed):
    rng = np.random.default_rng(100 + seed)
    x = rng.normal(size=(3, 5))
    check_gradient(lambda t: weighted(transpose(t), np.random.default_rng(seed)), x)
    check_gradient(lambda t: weighted(take_columns(t, 1, 4), np.random.default_rng(seed)), x)
    check_gradient(lambda t: weighted(total(t, axis=0), np.random.default_rng(seed)), x)
    check_gradient(lambda t: weighted(mean(t, axis=1), np.random.default_rng(seed)), x)
    check_gradient(lambda t: mean(t), x)


@pytest.mark.parametrize("seed", CONFIGS)
def test_arithmetic_gradients(seed):
    rng = np.random.default_rng(200 + seed)
    x, y = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    bias = rng.normal(size=3)
    check_gradient(lambda t: weighted(add(t, constant(y)), np.random.default_rng(seed)), x)
    check_gradient(lambda t: weighted(add(constant(x), t), np.random.default_rng(seed)), bias)
    check_gradient(lambda t: weighted(sub(constant(x), t), np.random.default_rng(seed)), y)
    check_gradient(lambda t: weighted(mul(t, constant(y)), np.random.default_rng(seed)), x)
    check_gradient(lambda t: weighted(shift(scale(t, -2.5), 0.7), np.random.default_rng(seed)), x)


@pytest.mark.parametrize("seed", CONFIGS)
def test_nonlinearity_gradients(seed):
    rng = np.random.default_rng(300 + seed)
    x = away_from_zero(rng, (3, 4))
    positive = rng.uniform(0.5, 2.0, size=(3, 4))
    check_gradient(lambda t: weighted(relu(t), np.random.default_rng(seed)), x)
    check_gradient(lambda t: weighted(exp(t), np.random.default_rng(seed)), x)
    check_gradient(lambda t: weighted(log(t), np.random.default_rng(seed)), positive)
    check_gradient(lambda t: weighted(sigmoid(scale(t, 3.0)), np.random.default_rng(seed)), x)
    check_gradient(lambda t: weighted(clamp(t, -0.5, 0.5), np.random.default_rng(seed)), x)
    check_gradient(lambda t: weighted(row_norm(t), np.random.default_rng(seed)), x)


@pytest.mark.parametrize("seed", CONFIGS)
@pytest.mark.parametrize("tau", [0.5, 1.0, 2.0])
def test_softmax_gradients(seed, tau):
    rng = np.random.default_rng(400 + seed)
    check_gradient(lambda t: weighted(softmax(t, tau), np.random.default_rng(seed)), rng.normal(size=(3, 5)))
    check_gradient(lambda t: weighted(softmax(t, tau), np.random.default_rng(seed)), rng.normal(size=4))


def two_layer_loss(arrays, x, labels):
    backbone = Backbone([Dense(constant(arrays[0]), constant(arrays[1])), Dense(constant(arrays[2]), constant(arrays[3]))])
    head = Head(constant(arrays[4]), constant(arrays[5]))
    return cross_entropy_supervised(head.logits(backbone.forward(constant(x))), one_hot(labels, head.num_classes))


@pytest.mark.parametrize("seed", range(3))
def test_two_layer_network_gradients(seed):
    rng = np.random.default_rng(600 + seed)
    backbone = Backbone.init(5, 7, 4, rng)
    head = Head.init(3, 4, 0.5, rng)
    params = backbone.parameters() + head.parameters()
    for p in params:
        p.data = p.data + rng.normal(scale=0.1, size=p.shape)
    x, labels = rng.normal(size=(6, 5)), rng.integers(0, 3, size=6)
    with GradTape() as tape:
        loss = head.logits(backbone.forward(constant(x)))
        loss = cross_entropy_supervised(loss, one_hot(labels, 3))
    analytic = tape.backward(loss).for_params(params)
    arrays = [p.data.copy() for p in params]
    assert len(arrays) == 6
    for index, grad in enumerate(analytic):
        def f(v, index=index):
            return two_layer_loss(arrays[:index] + [v] + arrays[index + 1:], x, labels).item()
        np.testing.assert_allclose(grad, finite_difference_gradient(f, arrays[index]), rtol=1e-4, atol=1e-7)
