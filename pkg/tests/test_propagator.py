import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from autogst.assembly import mass_matrix
from autogst.exceptions import DimensionMismatch, InvalidInnerProduct, TapeNotSealed
from autogst.models import burgers_model, heat_model, scalar_ode_model
from autogst.propagator import (
    LinearOperator, coo_text, dense_matrix, gst_operator, propagator_from_tape,
)
from autogst.tape import Tape

from oracles import heat_propagator, p1_mass


def test_zero_steps_is_identity():
    L = propagator_from_tape(burgers_model(n_steps=0).build_tape())
    np.testing.assert_array_equal(dense_matrix(L), np.eye(L.in_dim))


@pytest.mark.parametrize("a,dt,n", [(-1.0, 0.1, 5), (2.0, 0.05, 3), (-7.5, 0.01, 1)])
def test_scalar_ode_propagator(a, dt, n):
    L = propagator_from_tape(scalar_ode_model(a=a, dt=dt, n_steps=n).build_tape())
    expected = (1.0 / (1.0 - a * dt)) ** n * np.eye(2)
    np.testing.assert_allclose(dense_matrix(L), expected, rtol=1e-13, atol=1e-14)


def test_scalar_ode_first_order_to_exponential():
    a, T = -1.0, 1.0
    errors = []
    for n in (10, 20, 40, 80):
        L = propagator_from_tape(scalar_ode_model(a=a, dt=T / n, n_steps=n).build_tape())
        errors.append(abs(L.apply(np.ones(2))[0] - np.exp(a * T)))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(np.abs(orders - 1.0) < 0.05)


def test_heat_composition_oracle(heat, heat_tape):
    L = dense_matrix(propagator_from_tape(heat_tape))
    expected, step = heat_propagator(heat.parameters["kappa"], 20, heat.dt, heat.n_steps)
    np.testing.assert_allclose(L, expected, atol=1e-13)
    one = dense_matrix(propagator_from_tape(heat.with_steps(1).build_tape()))
    np.testing.assert_allclose(one, step, atol=1e-14)


def test_heat_gst_eigenvalues_dense_generalised(heat_tape):
    L = propagator_from_tape(heat_tape)
    G = gst_operator(L)
    Gd = dense_matrix(LinearOperator(G.n, G.n, G.apply))
    M = p1_mass(20)
    Ld = dense_matrix(L)
    mu_oracle = np.sort(la.eigh(Ld.T @ M @ Ld, M, eigvals_only=True))[::-1]
    mu = np.sort(np.linalg.eigvals(Gd).real)[::-1]
    np.testing.assert_allclose(mu, mu_oracle, atol=1e-12)
    assert np.all(mu > -1e-9)


def test_permutation_gives_identity_gst(rng):
    P = np.eye(6)[rng.permutation(6)]
    G = gst_operator(LinearOperator.from_matrix(P))
    Gd = dense_matrix(LinearOperator(6, 6, G.apply))
    np.testing.assert_allclose(Gd, np.eye(6), atol=1e-15)


def test_gst_self_adjoint_in_input_norm(burgers_tape, rng):
    G = gst_operator(propagator_from_tape(burgers_tape))
    for _ in range(5):
        x, y = rng.standard_normal((2, G.n))
        a, b = G.inner_input(x, G.apply(y)), G.inner_input(G.apply(x), y)
        assert abs(a - b) <= 1e-9 * max(abs(a), abs(b))


def test_eigenpair_norm_identity(heat_tape):
    # <L v, X_F L v> = mu <v, X_I v>
    L = propagator_from_tape(heat_tape)
    M = mass_matrix(L.input_space).toarray()
    Ld = dense_matrix(L)
    mu, V = la.eigh(Ld.T @ M @ Ld, M)
    for k in range(-3, 0):
        v = V[:, k]
        Lv = L.apply(v)
        assert Lv @ M @ Lv == pytest.approx(mu[k] * (v @ M @ v), rel=1e-8)


@pytest.mark.parametrize("X", [
    np.diag([1.0, -1.0, 2.0]),
    np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
    np.zeros((3, 3)),
])
def test_invalid_inner_product(X):
    L = LinearOperator.from_matrix(np.eye(3))
    with pytest.raises(InvalidInnerProduct):
        gst_operator(L, X_I=sp.csr_matrix(X))
    with pytest.raises(InvalidInnerProduct):
        gst_operator(L, X_F=sp.csr_matrix(X))


def test_dimension_checks():
    L = LinearOperator.from_matrix(np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        L.apply(np.ones(2))
    with pytest.raises(DimensionMismatch):
        gst_operator(L, X_I=sp.identity(2))


def test_unsealed_tape():
    with pytest.raises(TapeNotSealed):
        propagator_from_tape(Tape())


def test_transpose_operator(rng):
    A = rng.standard_normal((4, 3))
    L = LinearOperator.from_matrix(A)
    y = rng.standard_normal(4)
    np.testing.assert_allclose(L.T.apply(y), A.T @ y)
    assert L.T.shape == (3, 4)


def test_dense_matrix_size_limit():
    L = LinearOperator.from_matrix(sp.identity(300))
    with pytest.raises(ValueError):
        dense_matrix(L)


def test_coo_text_roundtrip():
    A = sp.csr_matrix(np.array([[1.5, 0.0], [-2.0, 3.0]]))
    text = coo_text(A)
    lines = text.splitlines()
    assert lines[0] == "2 2 3"
    B = np.zeros((2, 2))
    for line in lines[1:]:
        i, j, v = line.split()
        B[int(i), int(j)] = float(v)
    np.testing.assert_array_equal(B, A.toarray())


@given(seed=st.integers(0, 2 ** 31))
def test_linearity_of_propagator_and_gst(burgers_tape, seed):
    rng = np.random.default_rng(seed)
    L = propagator_from_tape(burgers_tape)
    G = gst_operator(L)
    x, y = rng.standard_normal((2, L.in_dim))
    a, b = rng.uniform(-2, 2, 2)
    tol = 1e-9 * (np.linalg.norm(x) + np.linalg.norm(y))
    assert np.linalg.norm(L.apply(a * x + b * y) - a * L.apply(x) - b * L.apply(y)) <= tol
    Gs = [G.apply(a * x + b * y), G.apply(x), G.apply(y)]
    scale = max(1.0, np.linalg.norm(Gs[0]))
    assert np.linalg.norm(Gs[0] - a * Gs[1] - b * Gs[2]) <= tol * scale
