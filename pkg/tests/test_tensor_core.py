import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stobserver.errors import ConfigurationError, ContractError, DimensionError
from stobserver.tensor_core import (
    Parameter,
    Tape,
    Tensor,
    backward,
    center_pad_kernel,
    concat,
    conv2d,
    conv_transpose2d,
    finite_diff_check,
    group_norm,
    hadamard,
    initialize,
    leaky_relu,
    sigmoid,
    spectral_norm,
    square,
    tabs,
)


def naive_conv2d(x, w, b, stride, pad):
    """Six nested loops, no im2col."""
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    xp = np.zeros((n, cin, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad : pad + h, pad : pad + wd] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for i in range(n):
        for o in range(cout):
            for r in range(ho):
                for c in range(wo):
                    acc = 0.0 if b is None else b[o]
                    for ci in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[i, ci, r * stride + u, c * stride + v] * w[o, ci, u, v]
                    out[i, o, r, c] = acc
    return out


def dense_conv_matrix(w, h, wd, stride, pad):
    """Materialize the convolution operator column by column with the loop oracle."""
    cin = w.shape[1]
    cols = []
    for k in range(cin * h * wd):
        e = np.zeros(cin * h * wd)
        e[k] = 1.0
        cols.append(naive_conv2d(e.reshape(1, cin, h, wd), w, None, stride, pad).ravel())
    return np.stack(cols, axis=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- conv2d ---------------------------------------------------------------
def test_conv2d_sum_of_ones():
    out = conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
    assert out.shape == (1, 1, 1, 1)
    assert out.item() == 9.0


def test_conv2d_unit_kernel_is_identity(rng):
    x = rng.standard_normal((2, 1, 5, 5))
    out = conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, x)


@pytest.mark.parametrize("stride,pad", [(2, 1), (1, 1), (1, 0), (3, 2)])
def test_conv2d_matches_loop_oracle(rng, stride, pad):
    x = rng.standard_normal((2, 3, 8, 8))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad)
    ref = naive_conv2d(x, w, b, stride, pad)
    assert out.shape == ref.shape
    np.testing.assert_allclose(out.data, ref, atol=1e-12)


def test_conv2d_reference_shape():
    out = conv2d(Tensor(np.zeros((2, 3, 8, 8))), Tensor(np.zeros((4, 3, 3, 3))), stride=2, padding=1)
    assert out.shape == (2, 4, 4, 4)


def test_conv2d_channel_mismatch_names_axis():
    with pytest.raises(DimensionError, match="axis"):
        conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))


def test_conv2d_kernel_too_large():
    with pytest.raises(DimensionError, match="height"):
        conv2d(Tensor(np.zeros((1, 1, 2, 8))), Tensor(np.zeros((1, 1, 3, 3))))


# -- conv_transpose2d -----------------------------------------------------------
def test_conv_transpose_unit_kernel_identity(rng):
    x = rng.standard_normal((1, 2, 4, 4))
    w = np.zeros((2, 2, 1, 1))
    w[0, 0] = w[1, 1] = 1.0
    out = conv_transpose2d(Tensor(x), Tensor(w))
    np.testing.assert_array_equal(out.data, x)


@pytest.mark.parametrize("stride,pad,opad,hw", [(1, 1, 0, 5), (2, 1, 0, 5), (2, 1, 1, 6), (2, 0, 1, 6), (3, 1, 0, 7)])
def test_adjoint_identity(rng, stride, pad, opad, hw):
    x = rng.standard_normal((1, 2, hw, hw))
    w = rng.standard_normal((3, 2, 3, 3))
    y_shape = conv2d(Tensor(x), Tensor(w), stride=stride, padding=pad).shape
    y = rng.standard_normal(y_shape)
    lhs = np.vdot(conv2d(Tensor(x), Tensor(w), stride=stride, padding=pad).data, y)
    back = conv_transpose2d(Tensor(y), Tensor(w), stride=stride, padding=pad, output_padding=opad)
    assert back.shape == x.shape
    rhs = np.vdot(x, back.data)
    assert abs(lhs - rhs) < 1e-10


def test_conv_transpose_output_size_formula(rng):
    y = conv_transpose2d(Tensor(rng.standard_normal((1, 3, 4, 4))), Tensor(rng.standard_normal((3, 5, 3, 3))),
                         stride=2, padding=1, output_padding=1)
    assert y.shape == (1, 5, 8, 8)


def test_conv_transpose_rejects_output_padding_ge_stride():
    with pytest.raises(ConfigurationError):
        conv_transpose2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))), stride=2, output_padding=2)


# -- group_norm ---------------------------------------------------------------
def test_group_norm_constant_input_is_zero():
    x = Tensor(np.full((2, 4, 3, 3), 7.0))
    out = group_norm(x, 2, Tensor(np.ones(4)), Tensor(np.zeros(4)))
    np.testing.assert_array_equal(out.data, 0.0)


def test_group_norm_zero_gamma_gives_beta(rng):
    beta = rng.standard_normal(4)
    out = group_norm(Tensor(rng.standard_normal((2, 4, 3, 3))), 2, Tensor(np.zeros(4)), Tensor(beta))
    np.testing.assert_allclose(out.data, np.broadcast_to(beta[None, :, None, None], out.shape))


def test_group_norm_statistics(rng):
    x = 5.0 * rng.standard_normal((3, 6, 5, 5)) + 2.0
    out = group_norm(Tensor(x), 2, Tensor(np.ones(6)), Tensor(np.zeros(6))).data
    g = out.reshape(3, 2, -1)
    assert np.abs(g.mean(axis=2)).max() < 1e-6
    assert np.abs(g.var(axis=2) - 1).max() < 1e-5


def test_group_norm_indivisible():
    with pytest.raises(ConfigurationError):
        group_norm(Tensor(np.zeros((1, 5, 2, 2))), 2, Tensor(np.ones(5)), Tensor(np.zeros(5)))


# -- activations ---------------------------------------------------------------
def test_leaky_relu_values():
    out = leaky_relu(Tensor(np.array([0.0, 2.0, -1.0])), 0.2).data
    np.testing.assert_allclose(out, [0.0, 2.0, -0.2])


def test_leaky_relu_kink_gradient_is_slope():
    x = Tensor(np.array([0.0, 1.0, -1.0]), requires_grad=True)
    backward(leaky_relu(x, 0.2).sum())
    np.testing.assert_allclose(x.grad, [0.2, 1.0, 0.2])


def test_sigmoid_values():
    out = sigmoid(Tensor(np.array([0.0, 1.0, 800.0, -800.0]))).data
    assert out[0] == 0.5
    assert abs(out[1] - 1.0 / (1.0 + np.exp(-1.0))) < 1e-15
    assert abs(out[1] - 0.7310585786300049) < 1e-15
    assert out[2] <= 1.0 and np.isfinite(out).all()
    assert out[3] >= 0.0


# -- hadamard ---------------------------------------------------------------------
def test_hadamard_trivial(rng):
    a = rng.standard_normal((2, 3, 4))
    np.testing.assert_array_equal(hadamard(Tensor(a), Tensor(np.ones_like(a))).data, a)
    np.testing.assert_array_equal(hadamard(Tensor(a), Tensor(np.zeros_like(a))).data, 0.0)


def test_hadamard_equals_diagonal_matrix_product(rng):
    A = rng.random((2, 2, 2))
    xi = rng.standard_normal((2, 2, 2))
    explicit = (np.diag(A.reshape(-1)) @ xi.reshape(-1)).reshape(2, 2, 2)
    np.testing.assert_allclose(hadamard(Tensor(xi), Tensor(A)).data, explicit, atol=1e-15)


def test_hadamard_broadcasts_over_batch(rng):
    a = rng.standard_normal((3, 2, 4, 4))
    b = rng.standard_normal((2, 4, 4))
    np.testing.assert_array_equal(hadamard(Tensor(a), Tensor(b)).data, a * b)
    with pytest.raises(DimensionError):
        hadamard(Tensor(a), Tensor(np.ones((2, 3, 3))))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_sigmoid_hadamard_is_contraction(seed):
    rng = np.random.default_rng(seed)
    A = sigmoid(Tensor(3 * rng.standard_normal((2, 3, 3)))).data
    e = rng.standard_normal((2, 3, 3))
    assert A.max() < 1.0
    assert np.abs(hadamard(Tensor(e), Tensor(A)).data).max() <= A.max() * np.abs(e).max()


# -- backward ---------------------------------------------------------------------
def test_backward_sum_gives_ones(rng):
    x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    backward(x.sum())
    np.testing.assert_array_equal(x.grad, 1.0)


def test_backward_square_gives_2x(rng):
    x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    backward((x * x).sum())
    np.testing.assert_allclose(x.grad, 2 * x.data)


def test_backward_accumulates_fan_out(rng):
    x = Tensor(rng.standard_normal(5), requires_grad=True)
    y = x * 3.0
    backward((y + y + x).sum())
    np.testing.assert_allclose(x.grad, 7.0)


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        backward(x * 2.0)


def test_tape_is_reverse_topological_and_unique(rng):
    x = Tensor(rng.standard_normal(3), requires_grad=True)
    a = x * 2.0
    b = a + x
    loss = (a * b).sum()
    nodes = Tape(loss).nodes
    assert len(nodes) == len({id(n) for n in nodes})
    pos = {id(n): i for i, n in enumerate(nodes)}
    for n in nodes:
        for p in n._parents:
            if p.requires_grad:
                assert pos[id(p)] > pos[id(n)]
    assert nodes[0] is loss and nodes[-1] is x


def test_grad_shape_matches_data(rng):
    w = Parameter(rng.standard_normal((2, 3, 3, 3)), init="normal")
    x = Tensor(rng.standard_normal((1, 3, 5, 5)))
    backward(conv2d(x, w, padding=1).sum())
    assert w.grad.shape == w.shape


# -- initializers -------------------------------------------------------------------
@pytest.mark.parametrize("init", ["normal", "uniform", "kaiming-uniform"])
def test_init_is_seed_deterministic(init):
    a = initialize((4, 3, 3, 3), init, np.random.default_rng(7))
    b = initialize((4, 3, 3, 3), init, np.random.default_rng(7))
    assert a.tobytes() == b.tobytes()


def test_kaiming_uniform_bound():
    v = initialize((16, 8, 3, 3), "kaiming-uniform", np.random.default_rng(0), np.float64)
    assert np.abs(v).max() <= np.sqrt(6.0 / 72)


# -- gradient checks -------------------------------------------------------------------
def test_finite_diff_quadratic():
    x = Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
    err = finite_diff_check(lambda: (x * x * 3.0).sum(), [x], eps=1e-5)
    assert err < 1e-9


def test_finite_diff_vector_objective_resists_large_offsets():
    # other entries push the sum to about 1e6; the gradient entries are about 1e-4
    x = Tensor(np.random.default_rng(0).uniform(0.2, 1.0, 1000), requires_grad=True)
    bulk = Tensor(np.full(1000, 1e3))
    err = finite_diff_check(lambda: concat([x * x * 1e-4, bulk], axis=0), [x], eps=1e-5, max_coords=20)
    assert err < 1e-7


def test_finite_diff_rejects_float32():
    x = Tensor(np.ones(2, dtype=np.float32), requires_grad=True)
    with pytest.raises(ConfigurationError):
        finite_diff_check(lambda: x.sum(), [x])


def _leaf(rng, shape, scale=1.0):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (2, 0)])
def test_gradcheck_conv2d(rng, stride, pad):
    x, w, b = _leaf(rng, (2, 2, 6, 6)), _leaf(rng, (3, 2, 3, 3)), _leaf(rng, (3,))
    r = rng.standard_normal(conv2d(x, w, b, stride, pad).shape)
    err = finite_diff_check(lambda: (conv2d(x, w, b, stride, pad) * r).sum(), [x, w, b])
    assert err < 1e-5


@pytest.mark.parametrize("stride,pad,opad", [(1, 1, 0), (2, 1, 1), (2, 1, 0), (2, 0, 1)])
def test_gradcheck_conv_transpose2d(rng, stride, pad, opad):
    x, w, b = _leaf(rng, (2, 3, 4, 4)), _leaf(rng, (3, 2, 3, 3)), _leaf(rng, (2,))
    r = rng.standard_normal(conv_transpose2d(x, w, b, stride, pad, opad).shape)
    err = finite_diff_check(lambda: (conv_transpose2d(x, w, b, stride, pad, opad) * r).sum(), [x, w, b])
    assert err < 1e-5


def test_gradcheck_group_norm(rng):
    x, g, b = _leaf(rng, (2, 4, 3, 3)), _leaf(rng, (4,)), _leaf(rng, (4,))
    r = rng.standard_normal((2, 4, 3, 3))
    assert finite_diff_check(lambda: (group_norm(x, 2, g, b) * r).sum(), [x, g, b]) < 1e-5


def test_gradcheck_elementwise(rng):
    x = _leaf(rng, (3, 4))
    y = _leaf(rng, (4,))
    r = rng.standard_normal((3, 4))
    f = lambda: (sigmoid(x) * r + square(x - y) + tabs(x) * 0.5).sum()  # noqa: E731
    assert finite_diff_check(f, [x, y]) < 1e-5
    assert finite_diff_check(lambda: (hadamard(x, y) * r).sum(), [x, y]) < 1e-5


def test_gradcheck_leaky_relu_off_kink(rng):
    x = Tensor(np.array([0.5, -0.3, 1.7, -2.0]), requires_grad=True)
    assert finite_diff_check(lambda: (leaky_relu(x, 0.2) * 1.3).sum(), [x]) < 1e-9


def test_gradcheck_center_pad_kernel(rng):
    w = _leaf(rng, (2, 2, 3, 3))
    r = rng.standard_normal((2, 2, 7, 7))
    assert finite_diff_check(lambda: (center_pad_kernel(w, 7) * r).sum(), [w], eps=1e-4) < 1e-9


def test_gradcheck_conv_norm_act_chain(rng):
    x, w = _leaf(rng, (2, 2, 6, 6)), _leaf(rng, (4, 2, 3, 3))
    b, g, beta = _leaf(rng, (4,)), _leaf(rng, (4,)), _leaf(rng, (4,))
    r = rng.standard_normal((2, 4, 3, 3))

    def f():
        h = conv2d(x, w, b, stride=2, padding=1)
        return (leaky_relu(group_norm(h, 2, g, beta), 0.2) * r).sum()

    assert finite_diff_check(f, [x, w, b, g, beta]) < 1e-5


# -- spectral norm ---------------------------------------------------------------------
def test_spectral_norm_unit_kernel():
    est = spectral_norm(np.full((1, 1, 1, 1), -2.5), (6, 6))
    assert abs(est.value - 2.5) < 1e-9 and est.converged


def test_spectral_norm_center_tap():
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 0.7
    assert abs(spectral_norm(w, (8, 8), padding=1).value - 0.7) < 1e-9


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0)])
def test_spectral_norm_matches_dense_svd(rng, stride, pad):
    w = rng.standard_normal((2, 2, 3, 3))
    dense = dense_conv_matrix(w, 8, 8, stride, pad)
    truth = np.linalg.svd(dense, compute_uv=False)[0]
    est = spectral_norm(w, (8, 8), stride=stride, padding=pad, tol=1e-4)
    assert abs(est.value - truth) / truth < 1e-3


def test_spectral_norm_transposed_equals_conv(rng):
    w = rng.standard_normal((3, 2, 3, 3))
    dense = dense_conv_matrix(w, 8, 8, 2, 1)
    truth = np.linalg.svd(dense, compute_uv=False)[0]
    est = spectral_norm(w, (4, 4), stride=2, padding=1, transposed=True, output_padding=1)
    assert abs(est.value - truth) / truth < 1e-3


def test_spectral_norm_deterministic(rng):
    w = rng.standard_normal((2, 2, 3, 3))
    assert spectral_norm(w, (8, 8), padding=1, seed=3) == spectral_norm(w, (8, 8), padding=1, seed=3)


def test_spectral_norm_requires_geometry():
    with pytest.raises(ConfigurationError):
        spectral_norm(np.ones((1, 1, 3, 3)), None)
