import numpy as np
import pytest

from quadlift import tensor as T
from quadlift.tensor import Tensor

from conftest import finite_diff_grad


def test_silu_at_zero():
    assert float(T.silu(Tensor(0.0)).data) == 0.0


def test_silu_saturates():
    # direct evaluation of 20 / (1 + e^-20); the sigmoid saturation gap
    # to 20 itself is ~4.1e-8
    expected = 20.0 / (1.0 + np.exp(-20.0))
    value = float(T.silu(Tensor(20.0)).data)
    assert value == pytest.approx(expected, abs=1e-14)
    assert abs(value - 20.0) < 1e-7


def test_matmul_shape():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((3, 1)))
    assert T.matmul(a, b).shape == (2, 1)


def test_matmul_shape_mismatch_names_op():
    with pytest.raises(T.DimensionError, match="matmul"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_elementwise_shape_mismatch():
    with pytest.raises(T.DimensionError, match="add"):
        T.add(Tensor(np.ones(3)), Tensor(np.ones(4)))


def test_backward_quadratic():
    w = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    root = T.tsum(w * w)
    T.backward(root)
    np.testing.assert_allclose(w.grad, [2.0, 4.0, 6.0])


def test_backward_constant_root_leaves_grads_zero():
    w = Tensor([1.0, 2.0], requires_grad=True)
    c = Tensor(5.0)
    T.backward(c)
    assert w.grad is None  # unreachable leaf never touched


def test_backward_requires_scalar_root():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(T.GradientError):
        T.backward(w * w)


def test_mlp_loss_matches_finite_differences(rng):
    w1 = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    b1 = Tensor(rng.normal(size=5), requires_grad=True)
    w2 = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
    x = Tensor(rng.normal(size=(4, 3)))

    def loss():
        h = T.silu(T.matmul(x, w1) + b1)
        y = T.matmul(h, w2)
        return T.tsum(T.square(y))

    root = loss()
    T.backward(root)
    for p in (w1, b1, w2):
        g = p.grad.copy()
        fd = finite_diff_grad(lambda: float(loss().data), p.data)
        np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-7)


OPS_1IN = {
    "silu": T.silu,
    "sigmoid": T.sigmoid,
    "abs": T.tabs,
    "square": T.square,
    "sum": lambda a: T.tsum(a),
    "mean": lambda a: T.tmean(a),
    "kron": T.kron_self,
    "sum_axis": lambda a: T.tsum(a, axis=1),
    "scale": lambda a: T.scale(a, -2.5),
    "transpose": T.transpose,
    "reshape": lambda a: T.reshape(a, (-1,)),
}


@pytest.mark.parametrize("name", sorted(OPS_1IN))
@pytest.mark.parametrize("seed", range(5))
def test_unary_ops_match_finite_differences(name, seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)

    def loss():
        return T.tsum(T.square(OPS_1IN[name](a)))

    root = loss()
    T.backward(root)
    fd = finite_diff_grad(lambda: float(loss().data), a.data)
    np.testing.assert_allclose(a.grad, fd, rtol=1e-4, atol=1e-7)


@pytest.mark.parametrize("seed", range(5))
def test_binary_ops_match_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    bias = Tensor(rng.normal(size=4), requires_grad=True)

    def loss():
        y = a * b + bias - T.scale(a, 0.5)
        return T.tsum(T.square(y)) + T.tsum(T.tabs(T.concat([a, b], axis=1)))

    root = loss()
    T.backward(root)
    for p in (a, b, bias):
        fd = finite_diff_grad(lambda: float(loss().data), p.data)
        np.testing.assert_allclose(p.grad, fd, rtol=1e-4, atol=1e-7)


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (3, 2)])
def test_conv1d_matches_finite_differences(stride, padding):
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(size=(2, 3, 12)), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 3, 4)), requires_grad=True)

    def loss():
        return T.tsum(T.square(T.conv1d(x, w, stride=stride, padding=padding)))

    root = loss()
    T.backward(root)
    for p in (x, w):
        fd = finite_diff_grad(lambda: float(loss().data), p.data)
        np.testing.assert_allclose(p.grad, fd, rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1)])
def test_conv_transpose1d_matches_finite_differences(stride, padding):
    rng = np.random.default_rng(8)
    x = Tensor(rng.normal(size=(2, 4, 6)), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 3, 4)), requires_grad=True)

    def loss():
        return T.tsum(T.square(
            T.conv_transpose1d(x, w, stride=stride, padding=padding)))

    root = loss()
    T.backward(root)
    for p in (x, w):
        fd = finite_diff_grad(lambda: float(loss().data), p.data)
        np.testing.assert_allclose(p.grad, fd, rtol=1e-4, atol=1e-6)


def test_conv_transpose_inverts_conv_lengths():
    x = np.zeros((1, 1, 256))
    y = T.conv1d(Tensor(x), Tensor(np.zeros((1, 1, 4))), stride=2, padding=1)
    assert y.shape == (1, 1, 128)
    back = T.conv_transpose1d(y, Tensor(np.zeros((1, 1, 4))), stride=2,
                              padding=1)
    assert back.shape == (1, 1, 256)


def test_backward_deterministic(rng):
    a = Tensor(rng.normal(size=(5, 5)), requires_grad=True)
    b = Tensor(rng.normal(size=(5, 5)), requires_grad=True)

    def run():
        T.zero_grads([a, b])
        root = T.tsum(T.tabs(T.matmul(T.silu(a), b) + a * b))
        T.backward(root)
        return a.grad.copy(), b.grad.copy()

    g1 = run()
    g2 = run()
    assert np.array_equal(g1[0], g2[0]) and np.array_equal(g1[1], g2[1])


def test_grad_accumulates_over_shared_subexpressions():
    x = Tensor(2.0, requires_grad=True)
    y = x * x + x * x  # two uses of the same node
    T.backward(y)
    assert float(x.grad) == pytest.approx(8.0)


def test_jacobian_of_linear_map_is_exact(rng):
    W = rng.normal(size=(3, 2))
    x = Tensor(rng.normal(size=2), requires_grad=True)
    xm = T.reshape(x, (1, 2))
    y = T.reshape(T.matmul(xm, Tensor(W.T)), (3,))
    J = T.jacobian(y, x)
    np.testing.assert_array_equal(J, W)


def test_jacobian_matches_finite_differences(rng):
    w1 = Tensor(rng.normal(size=(3, 6)))
    w2 = Tensor(rng.normal(size=(6, 2)))
    x0 = rng.normal(size=3)

    def f(xv):
        h = T.silu(T.matmul(Tensor(xv[None, :]), w1))
        return T.matmul(h, w2).data[0]

    x = Tensor(x0, requires_grad=True)
    h = T.silu(T.matmul(T.reshape(x, (1, 3)), w1))
    y = T.reshape(T.matmul(h, w2), (2,))
    J = T.jacobian(y, x)
    eps = 1e-5
    for j in range(3):
        e = np.zeros(3)
        e[j] = eps
        col = (f(x0 + e) - f(x0 - e)) / (2 * eps)
        np.testing.assert_allclose(J[:, j], col, rtol=1e-4, atol=1e-8)
