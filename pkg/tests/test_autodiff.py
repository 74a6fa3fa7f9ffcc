import numpy as np
import pytest

from dida import autodiff as ad
from dida.errors import ConfigError, ContractError, DimensionError, DomainError, NumericError


def loop_affine(W, b, x):
    """Independent nested-loop oracle for W @ x + b on a batch."""
    batch = x.reshape(1, -1) if x.ndim == 1 else x
    out = np.zeros((batch.shape[0], W.shape[0]))
    for r in range(batch.shape[0]):
        for i in range(W.shape[0]):
            acc = b[i]
            for j in range(W.shape[1]):
                acc += W[i, j] * batch[r, j]
            out[r, i] = acc
    return out.reshape(-1) if x.ndim == 1 else out


def test_affine_identity():
    W = ad.Tensor(np.eye(2), requires_grad=True)
    b = ad.Tensor(np.zeros(2), requires_grad=True)
    out = ad.affine(W, b, ad.Tensor([3.0, 4.0]))
    assert np.allclose(out.data, [3.0, 4.0])


def test_affine_row_sum():
    out = ad.affine(ad.Tensor([[1.0, 1.0]]), ad.Tensor([1.0]), ad.Tensor([2.0, 3.0]))
    assert out.data.shape == (1,)
    assert out.data[0] == 6.0


def test_affine_matches_loop_oracle():
    rng = np.random.default_rng(7)
    W = rng.normal(size=(3, 2))
    b = rng.normal(size=3)
    x = rng.normal(size=(4, 2))
    out = ad.affine(ad.Tensor(W), ad.Tensor(b), ad.Tensor(x))
    assert np.allclose(out.data, loop_affine(W, b, x), atol=1e-12)


def test_affine_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.affine(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones(2)), ad.Tensor(np.ones(2)))


def test_activation_values():
    x = ad.Tensor([-1.0, 0.0, 2.0])
    assert np.allclose(ad.activation("relu", x).data, [0.0, 0.0, 2.0])
    assert ad.activation("tanh", ad.Tensor(0.0)).data == 0.0
    sat = ad.activation("sigmoid", ad.Tensor([-20.0, 20.0])).data
    assert np.all(np.isfinite(sat))
    assert 0 < sat[0] < sat[1] < 1
    with pytest.raises(ConfigError):
        ad.activation("softplus", x)


def test_reduce_values():
    assert ad.reduce("mean", ad.Tensor([2.0, 4.0, 6.0])).data == 4.0
    assert np.allclose(ad.reduce("sum", ad.Tensor(np.ones((3, 4))), axis=0).data, np.full(4, 3.0))
    with pytest.raises(DomainError):
        ad.reduce("mean", ad.Tensor(np.zeros((0, 2))), axis=0)


def test_mean_gradient_is_one_over_n():
    x = ad.Tensor([1.0, 2.0, 3.0, 4.0], requires_grad=True)
    ad.backward(x.mean())
    assert np.allclose(x.grad, np.full(4, 0.25))


def test_tensor_rejects_nonfinite():
    with pytest.raises(NumericError):
        ad.Tensor([1.0, np.nan])
    with pytest.raises(NumericError):
        ad.Tensor([np.inf])


def test_backward_quadratic():
    x = ad.Tensor(3.0, requires_grad=True)
    ad.backward(x * x)
    assert x.grad == 6.0


def test_backward_constant_loss():
    x = ad.Tensor(3.0, requires_grad=True)
    loss = x * 0.0
    ad.backward(loss)
    assert x.grad == 0.0


def test_backward_requires_scalar():
    x = ad.Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        ad.backward(x + 1.0)


def test_backward_accumulates_without_reset():
    x = ad.Tensor(2.0, requires_grad=True)
    ad.backward(x * x)
    ad.backward(x * x)
    assert x.grad == 8.0


def test_shared_subgraph_gradient():
    # y = (x*x) used twice: d/dx [x^2 + 2*x^2] = 6x
    x = ad.Tensor(2.0, requires_grad=True)
    sq = x * x
    ad.backward(sq + 2.0 * sq)
    assert x.grad == pytest.approx(12.0)


def test_two_layer_network_matches_finite_differences():
    rng = np.random.default_rng(1)
    W1 = ad.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    b1 = ad.Tensor(rng.normal(size=4), requires_grad=True)
    W2 = ad.Tensor(rng.normal(size=(1, 4)), requires_grad=True)
    b2 = ad.Tensor(rng.normal(size=1), requires_grad=True)
    x = rng.normal(size=(5, 3))

    def f():
        h = ad.activation("tanh", ad.affine(W1, b1, ad.Tensor(x)))
        return ad.affine(W2, b2, h).sum() * (1.0 / 5)

    report = ad.check_gradients(f, [W1, b1, W2, b2], eps=1e-5)
    assert report.max_rel_error <= 1e-5
    assert not report.excluded


def test_check_gradients_linear_is_exact():
    w = ad.Tensor([1.5, -2.0], requires_grad=True)

    def f():
        return (w * ad.Tensor([3.0, 4.0])).sum()

    report = ad.check_gradients(f, [w])
    assert report.max_rel_error <= 1e-10


def test_check_gradients_reports_relu_kink():
    w = ad.Tensor([0.0, 1.0], requires_grad=True)

    def f():
        return w.relu().sum()

    report = ad.check_gradients(f, [w], eps=1e-5)
    assert (0, 0) in report.excluded
    assert report.max_rel_error <= 1e-10  # the smooth coordinate still checks


def test_check_gradients_eps_domain():
    w = ad.Tensor([1.0], requires_grad=True)
    with pytest.raises(DomainError):
        ad.check_gradients(lambda: w.sum(), [w], eps=0.5)


def test_gather_rows_backward_scatter_adds():
    x = ad.Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    out = x.gather_rows([0, 0, 2])
    ad.backward(out.sum())
    assert np.allclose(x.grad, [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])


def test_concat_backward_splits():
    a = ad.Tensor(np.ones((2, 2)), requires_grad=True)
    b = ad.Tensor(np.ones((2, 3)), requires_grad=True)
    out = ad.concat([a, b], axis=1)
    ad.backward((out * 2.0).sum())
    assert np.allclose(a.grad, 2.0) and np.allclose(b.grad, 2.0)


def test_adam_first_step_approaches_signed_lr():
    p = ad.Tensor([1.0, -1.0], requires_grad=True)
    p.grad = np.array([10.0, -10.0])
    state = ad.AdamState.init([p], learning_rate=0.1)
    ad.adam_step([p], state)
    # with |g| >> eps the first bias-corrected step is lr * sign(g)
    assert np.allclose(p.data, [1.0 - 0.1, -1.0 + 0.1], atol=1e-6)
    assert state.step_count == 1


def test_adam_zero_gradient_keeps_params():
    p = ad.Tensor([1.0, 2.0], requires_grad=True)
    p.grad = np.zeros(2)
    state = ad.AdamState.init([p])
    ad.adam_step([p], state)
    assert np.allclose(p.data, [1.0, 2.0])


def scalar_adam_recurrence(w0, lr, steps):
    """Independent scalar recurrence for Adam on f(w) = w^2."""
    m = v = 0.0
    w = w0
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, steps + 1):
        g = 2.0 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
    return w


def test_adam_converges_on_quadratic():
    p = ad.Tensor(1.0, requires_grad=True)
    state = ad.AdamState.init([p], learning_rate=0.1)
    for _ in range(100):
        p.zero_grad()
        ad.backward(p * p)
        ad.adam_step([p], state)
    expected = scalar_adam_recurrence(1.0, 0.1, 100)
    assert abs(float(p.data) - expected) <= 1e-12
    assert abs(float(p.data)) < 0.1


def test_adam_shape_mismatch():
    p = ad.Tensor([1.0, 2.0], requires_grad=True)
    p.grad = np.zeros(3)
    state = ad.AdamState.init([p])
    with pytest.raises(ContractError):
        ad.adam_step([p], state)


def test_forward_and_backward_deterministic():
    def run():
        rng = np.random.default_rng(42)
        W = ad.Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        x = ad.Tensor(rng.normal(size=(2, 3)))
        loss = ad.activation("sigmoid", x @ ad.transpose(W)).sum()
        ad.backward(loss)
        return loss.data.copy(), W.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert np.array_equal(l1, l2)
    assert np.array_equal(g1, g2)


def test_matmul_rejects_bad_shapes():
    with pytest.raises(DimensionError):
        ad.Tensor(np.ones((2, 3))) @ ad.Tensor(np.ones((2, 3)))


def test_sqrt_kink_convention_at_zero():
    x = ad.Tensor([0.0, 4.0], requires_grad=True)
    ad.backward(x.sqrt().sum())
    assert np.allclose(x.grad, [0.0, 0.25])
