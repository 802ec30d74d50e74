import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idapbc.errors import ContractError, NumericalFailure, SingularityError
from idapbc.numerics import (
    StepConfig,
    gauss_legendre,
    gradient,
    hessian,
    jacobian,
    lie_bracket,
    line_integral,
    numerical_rank,
    pointwise,
    pseudo_inverse,
    sym_eig_extrema,
)

finite = st.floats(-3.0, 3.0, allow_nan=False)


# --- jacobian ---------------------------------------------------------------

def test_jacobian_identity():
    J = jacobian(lambda x: x, np.array([0.3, -2.0, 5.0]))
    np.testing.assert_allclose(J, np.eye(3), atol=1e-9)


def test_jacobian_product_field():
    field = lambda x: np.stack([x[..., 0] * x[..., 1], x[..., 1] ** 2], axis=-1)
    J = jacobian(field, np.array([2.0, 3.0]))
    np.testing.assert_allclose(J, [[3.0, 2.0], [0.0, 6.0]], atol=1e-8)


def test_jacobian_constant_field():
    c = np.array([1.0, -4.0, 2.5])
    J = jacobian(lambda x: np.broadcast_to(c, x.shape), np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(J, np.zeros((3, 3)), atol=1e-12)


def test_jacobian_batched_and_matrix_valued():
    def field(x):
        a, b = x[..., 0], x[..., 1]
        return np.stack([np.stack([a * b, a], -1), np.stack([b, a**2], -1)], -2)

    X = np.array([[1.0, 2.0], [-0.5, 3.0], [4.0, 0.1]])
    J = jacobian(field, X)
    assert J.shape == (3, 2, 2, 2)
    for x, Jx in zip(X, J):
        a, b = x
        expected = np.array([[[b, a], [1, 0]], [[0, 1], [2 * a, 0]]])
        np.testing.assert_allclose(Jx, expected, atol=1e-7)


def test_jacobian_partial_columns():
    field = lambda x: np.stack([x[..., 0] * x[..., 2], np.sin(x[..., 1])], axis=-1)
    x = np.array([0.5, 0.2, -1.5])
    full = jacobian(field, x)
    part = jacobian(field, x, columns=[2, 0])
    np.testing.assert_allclose(part, full[:, [2, 0]], atol=0)


@settings(max_examples=40, deadline=None)
@given(st.lists(finite, min_size=3, max_size=3))
def test_jacobian_matches_one_sided_oracle(xs):
    x = np.array(xs)
    field = lambda y: np.stack([np.sin(y[..., 0]) * y[..., 1], np.exp(0.3 * y[..., 2]) + y[..., 0] ** 2], -1)
    cfg = StepConfig(fd_step=1e-5)
    J = jacobian(field, x, cfg)
    # forward-difference oracle at half the step: first-order accurate
    h = 0.5 * cfg.fd_step * np.maximum(1.0, np.abs(x))
    oracle = np.column_stack([(field(x + h[j] * np.eye(3)[j]) - field(x)) / h[j] for j in range(3)])
    assert np.max(np.abs(J - oracle)) < 50 * cfg.fd_step


def test_jacobian_names_failing_coordinate():
    def field(x):
        with np.errstate(invalid="ignore"):
            out = np.stack([x[..., 0], np.sqrt(x[..., 1])], -1)
        if np.any(x[..., 1] < 0):
            raise FloatingPointError("negative")
        return out

    with pytest.raises(NumericalFailure, match="coordinate 1"):
        jacobian(field, np.array([1.0, 0.0]))


def test_jacobian_rejects_non_broadcasting_field():
    with pytest.raises(ContractError):
        jacobian(lambda x: np.array([1.0, 2.0]), np.array([1.0, 2.0]))


def test_pointwise_adapter():
    field = pointwise(lambda x: np.array([x[0] * x[1], x[1] ** 2]))
    J = jacobian(field, np.array([2.0, 3.0]))
    np.testing.assert_allclose(J, [[3.0, 2.0], [0.0, 6.0]], atol=1e-8)


# --- gradient / hessian -----------------------------------------------------

def test_gradient_exact_for_quartic():
    f = lambda x: x[..., 0] ** 4 + 3 * x[..., 0] * x[..., 1] ** 3 - x[..., 1]
    x = np.array([0.7, -1.2])
    expected = [4 * 0.7**3 + 3 * (-1.2) ** 3, 9 * 0.7 * 1.2**2 - 1]
    np.testing.assert_allclose(gradient(f, x), expected, rtol=1e-10)


def test_hessian_quadratic_at_origin():
    H = hessian(lambda x: x[..., 0] ** 2 + x[..., 1] ** 2, np.zeros(2))
    np.testing.assert_allclose(H, 2 * np.eye(2), atol=1e-6)


def test_hessian_bilinear():
    H = hessian(lambda x: x[..., 0] * x[..., 1], np.ones(2))
    np.testing.assert_allclose(H, [[0.0, 1.0], [1.0, 0.0]], atol=1e-6)


def test_hessian_constant():
    H = hessian(lambda x: np.full(x.shape[:-1], 7.0), np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(H, np.zeros((3, 3)), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(finite, min_size=3, max_size=3))
def test_hessian_exactly_symmetric_and_matches_jacobian_of_gradient(xs):
    x = np.array(xs)
    f = lambda y: np.sin(y[..., 0] * y[..., 1]) + y[..., 2] ** 3 * y[..., 0] + np.cosh(0.5 * y[..., 1])
    cfg = StepConfig(hess_step=1e-5, fd_step=1e-5)
    H = hessian(f, x, cfg)
    assert np.array_equal(H, H.T)
    grad = lambda y: jacobian(f, y, cfg)
    seq = jacobian(grad, x, StepConfig(fd_step=1e-4))
    seq = 0.5 * (seq + seq.T)
    scale = max(1.0, np.max(np.abs(seq)))
    assert np.max(np.abs(H - seq)) <= 1e-4 * scale


# --- lie bracket ------------------------------------------------------------

def test_lie_bracket_constant_fields_commute():
    v = lambda x: np.broadcast_to([1.0, 2.0, 0.0], x.shape)
    w = lambda x: np.broadcast_to([0.0, -1.0, 3.0], x.shape)
    np.testing.assert_allclose(lie_bracket(v, w, np.array([0.1, 0.2, 0.3])), 0.0, atol=1e-10)


def test_lie_bracket_hand_computed():
    v = lambda x: np.stack([np.ones(x.shape[:-1]), np.zeros(x.shape[:-1])], -1)
    w = lambda x: np.stack([np.zeros(x.shape[:-1]), x[..., 0]], -1)
    for x in ([0.0, 0.0], [2.0, -1.0], [-3.0, 5.0]):
        np.testing.assert_allclose(lie_bracket(v, w, np.array(x)), [0.0, 1.0], atol=1e-8)


def test_lie_bracket_self_is_zero():
    v = lambda x: np.stack([x[..., 1] ** 2, np.sin(x[..., 0])], -1)
    np.testing.assert_allclose(lie_bracket(v, v, np.array([0.4, 1.3])), 0.0, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.lists(finite, min_size=2, max_size=2))
def test_lie_bracket_antisymmetric(xs):
    x = np.array(xs)
    v = lambda y: np.stack([y[..., 1] ** 2, np.sin(y[..., 0])], -1)
    w = lambda y: np.stack([np.exp(0.2 * y[..., 0]), y[..., 0] * y[..., 1]], -1)
    total = lie_bracket(v, w, x) + lie_bracket(w, v, x)
    assert np.all(total == 0.0)


def test_lie_bracket_dimension_mismatch():
    v = lambda x: x
    w = lambda x: x[..., :1]
    with pytest.raises(ContractError):
        lie_bracket(v, w, np.ones(2))


# --- quadrature -------------------------------------------------------------

def test_line_integral_linear():
    assert abs(line_integral(lambda lam: lam) - 0.5) < 1e-14


def test_line_integral_cubic_two_nodes():
    assert abs(line_integral(lambda lam: lam**3, StepConfig(quad_order=2)) - 0.25) < 1e-14


def test_line_integral_constant_matrix():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(line_integral(lambda lam: A), A, atol=1e-14)


def test_line_integral_vectorized_matches_loop():
    f = lambda lam: np.stack([lam**2, np.cos(lam)], axis=-1)
    a = line_integral(f)
    b = line_integral(f, vectorized=True)
    np.testing.assert_allclose(a, b, rtol=1e-15)
    np.testing.assert_allclose(a, [1 / 3, np.sin(1.0)], rtol=1e-14)


@pytest.mark.parametrize("q", [2, 3, 5, 8, 16, 32])
def test_line_integral_reproduces_monomials(q):
    cfg = StepConfig(quad_order=q)
    for p in range(2 * q):
        assert abs(line_integral(lambda lam: lam**p, cfg) - 1.0 / (p + 1)) < 1e-13


def test_gauss_legendre_weights_sum_to_one():
    nodes, weights = gauss_legendre(16)
    assert abs(weights.sum() - 1.0) < 1e-15
    assert np.all((nodes > 0) & (nodes < 1))


def test_line_integral_non_finite():
    with pytest.raises(NumericalFailure), np.errstate(divide="ignore", invalid="ignore"):
        line_integral(lambda lam: 1.0 / (lam - lam) if lam > 0.5 else 0.0)


# --- linear algebra ---------------------------------------------------------

def test_sym_eig_identity():
    assert sym_eig_extrema(np.eye(3)) == (1.0, 1.0)


def test_sym_eig_maglev_dissipation():
    lo, hi = sym_eig_extrema(np.diag([-4.0, -4.0, 0.0]))
    assert (lo, hi) == (-4.0, 0.0)


def test_sym_eig_two_by_two():
    lo, hi = sym_eig_extrema(np.array([[2.0, 1.0], [1.0, 2.0]]))
    # roots of (2 - l)^2 - 1
    assert abs(lo - 1.0) < 1e-12 and abs(hi - 3.0) < 1e-12


def test_sym_eig_rejects_nonsymmetric():
    with pytest.raises(ContractError):
        sym_eig_extrema(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_pseudo_inverse_unit_column():
    np.testing.assert_allclose(pseudo_inverse(np.array([[1.0], [0.0], [0.0]])), [[1.0, 0.0, 0.0]])


def test_pseudo_inverse_orthonormal_columns():
    Q, _ = np.linalg.qr(np.random.default_rng(3).normal(size=(5, 2)))
    np.testing.assert_allclose(pseudo_inverse(Q), Q.T, atol=1e-12)


def test_pseudo_inverse_ones():
    np.testing.assert_allclose(pseudo_inverse(np.array([[1.0], [1.0]])), [[0.5, 0.5]], atol=1e-15)


def test_pseudo_inverse_rank_deficient():
    with pytest.raises(SingularityError):
        pseudo_inverse(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_pseudo_inverse_properties(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, n))
    G = rng.normal(size=(n, m))
    Gd = pseudo_inverse(G)
    np.testing.assert_allclose(Gd @ G, np.eye(m), atol=1e-9)
    P = G @ Gd
    np.testing.assert_allclose(P @ P, P, atol=1e-9)


def test_numerical_rank():
    assert numerical_rank(np.zeros((3, 2))) == 0
    assert numerical_rank(np.eye(3)) == 3
    A = np.array([[1.0, 0.0], [0.0, 1e-12]])
    assert numerical_rank(A) == 1
    np.testing.assert_array_equal(numerical_rank(np.stack([np.eye(2), A])), [2, 1])
