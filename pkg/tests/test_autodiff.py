import numpy as np
import pytest

from fdibench.autodiff import (Adam, Dense, GRUCell, Module, Tensor, concat,
                               mse, numeric_gradient)


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / denom


def check_param_grads(loss_fn, params, tol=1e-4):
    """Analytic vs central-difference gradients for every parameter."""
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad.copy() for p in params]
    for p, g in zip(params, analytic):
        numeric = numeric_gradient(lambda: loss_fn().data, p)
        assert rel_err(g, numeric) < tol


def test_elementwise_op_gradients():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    y = Tensor(rng.standard_normal((4, 3)) + 2.0, requires_grad=True)

    def loss():
        z = (x * y + x / y - y + 0.5) ** 2
        return z.sum()

    check_param_grads(loss, [x, y])


def test_activation_gradients():
    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((5, 4)) * 0.7, requires_grad=True)
    for act in ("tanh", "sigmoid", "exp"):
        def loss():
            return getattr(x, act)().sum()
        check_param_grads(loss, [x])


def test_leaky_relu_gradient_away_from_kink():
    x = Tensor(np.array([[-2.0, -0.5, 0.4, 1.5]]), requires_grad=True)

    def loss():
        return (x.leaky_relu(0.2) ** 2).sum()

    check_param_grads(loss, [x])


def test_softmax_gradient():
    rng = np.random.default_rng(2)
    x = Tensor(rng.standard_normal((3, 5)), requires_grad=True)
    w = rng.standard_normal((3, 5))

    def loss():
        return (x.softmax(axis=-1) * w).sum()

    check_param_grads(loss, [x])


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(3)
    x = Tensor(rng.standard_normal((6, 7)) * 10)
    s = x.softmax(axis=-1).data
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
    assert (s >= 0).all()


def test_matmul_gradients_batched():
    rng = np.random.default_rng(4)
    a = Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 5)), requires_grad=True)

    def loss():
        return ((a @ b) ** 2).mean()

    check_param_grads(loss, [a, b])


def test_getitem_and_concat_gradients():
    rng = np.random.default_rng(5)
    x = Tensor(rng.standard_normal((4, 6)), requires_grad=True)

    def loss():
        parts = concat([x[:, :2], x[:, 3:]], axis=1)
        return (parts ** 2).sum()

    check_param_grads(loss, [x])


def test_broadcasting_gradients():
    rng = np.random.default_rng(6)
    x = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal((3,)), requires_grad=True)

    def loss():
        return ((x + b) * 2.0).sum()

    check_param_grads(loss, [x, b])
    # bias gradient is summed over the broadcast axis
    b.grad = None
    x.grad = None
    ((x + b).sum()).backward()
    np.testing.assert_allclose(b.grad, np.full(3, 4.0), atol=1e-12)


def test_dense_layer_gradients():
    rng = np.random.default_rng(7)
    layer = Dense(4, 3, "tanh", rng)
    x = np.array(rng.standard_normal((6, 4)))
    target = rng.standard_normal((6, 3))

    def loss():
        return mse(layer(Tensor(x)), target)

    check_param_grads(loss, layer.parameters())


def test_gru_cell_gradients():
    rng = np.random.default_rng(8)
    cell = GRUCell(3, 5, rng)
    x = rng.standard_normal((4, 3))
    x2 = rng.standard_normal((4, 3))
    target = rng.standard_normal((4, 5))

    def loss():
        h = cell.init_state(4)
        h = cell(Tensor(x), h)
        h = cell(Tensor(x2), h)  # through two steps
        return mse(h, target)

    check_param_grads(loss, cell.parameters())


def test_backward_accumulates_through_shared_subexpressions():
    x = Tensor(np.array([3.0]), requires_grad=True)
    y = x * x + x * x  # x used in two branches
    y.backward()
    np.testing.assert_allclose(x.grad, [12.0], atol=1e-12)


def test_module_parameter_discovery():
    rng = np.random.default_rng(9)

    class Net(Module):
        def __init__(self):
            self.a = Dense(2, 3, None, rng)
            self.parts = [Dense(3, 3, None, rng), Dense(3, 1, None, rng)]

    net = Net()
    assert len(net.parameters()) == 6  # three layers x (W, b)
    arrays = net.state_arrays()
    net.zero_grad()
    net.set_state_arrays([a * 0 for a in arrays])
    assert all(np.all(p.data == 0) for p in net.parameters())


def test_adam_reduces_quadratic_loss():
    rng = np.random.default_rng(10)
    w = Tensor(rng.standard_normal(5), requires_grad=True)
    target = np.arange(5.0)
    opt = Adam([w], lr=0.1)
    first = None
    for _ in range(200):
        opt.zero_grad()
        loss = ((w - target) ** 2).sum()
        first = first if first is not None else float(loss.data)
        loss.backward()
        opt.step()
    assert float(loss.data) < 1e-3 < first


def test_gradients_none_without_requires_grad():
    x = Tensor(np.ones(3))
    y = (x * 2).sum()
    y.backward()
    assert x.grad is None
