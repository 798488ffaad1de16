import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from autogst import forms as F
from autogst.assembly import assemble
from autogst.exceptions import ArityError, SpaceMismatch
from autogst.mesh import FunctionSpace, IntervalMesh


@pytest.fixture
def V():
    return FunctionSpace(IntervalMesh(0.0, 1.0, 8), "P2")


def _coef(V, seed, name="u"):
    return F.Coefficient(V, np.random.default_rng(seed).standard_normal(V.dof_count), name=name)


def test_arity_bookkeeping(V):
    u, v, w = _coef(V, 0), F.TestFunction(V), F.TrialFunction(V)
    assert F.arity(u * u) == 0
    assert F.arity(u * v) == 1
    assert F.arity(w * v) == 2
    assert F.arity(F.replace(u * v, {u: w})) == 2


def test_product_rule_on_square(V):
    u, v = _coef(V, 0), F.TestFunction(V)
    du = _coef(V, 1, "du")
    got = assemble(F.gateaux_derivative(u * u * v, u, du))
    expected = assemble(2.0 * u * du * v)
    np.testing.assert_allclose(got, expected, atol=1e-13)


def test_derivative_of_linear_operator_is_itself(V):
    u, v, w = _coef(V, 0), F.TestFunction(V), F.TrialFunction(V)
    nu = F.Constant(0.3)
    a = F.gateaux_derivative(nu * u.dx() * v.dx(), u, w)
    np.testing.assert_array_equal(assemble(a).toarray(), assemble(nu * w.dx() * v.dx()).toarray())


def test_derivative_without_dependency_is_zero(V):
    u, z, v, w = _coef(V, 0), _coef(V, 1, "z"), F.TestFunction(V), F.TrialFunction(V)
    d = F.gateaux_derivative(z * z.dx() * v, u, w)
    assert F.arity(d) == 2
    assert assemble(d).nnz == 0
    assert not np.any(assemble(F.gateaux_derivative(z * v, u, _coef(V, 2, "d"))))


def test_direction_space_mismatch(V):
    u = _coef(V, 0)
    other = FunctionSpace(IntervalMesh(0.0, 1.0, 8), "P1")
    with pytest.raises(SpaceMismatch):
        F.gateaux_derivative(u * F.TestFunction(V), u, F.TrialFunction(other))


@pytest.mark.parametrize("scheme", ["implicit_euler", "trapezoidal"])
def test_burgers_jacobian_matches_finite_differences(scheme):
    from autogst import burgers_model
    model = burgers_model(scheme=scheme, n_cells=10)
    prob = model.problem
    prob.state.values = model.initial_state()
    u = prob.unknown
    base = np.random.default_rng(3).standard_normal(u.space.dof_count)
    Jac = assemble(F.gateaux_derivative(prob.residual, u, F.TrialFunction(u.space)),
                   {u: base}).toarray()
    h = 1e-6
    fd = np.empty_like(Jac)
    for j in range(base.size):
        e = np.zeros_like(base)
        e[j] = h
        fd[:, j] = (assemble(prob.residual, {u: base + e})
                    - assemble(prob.residual, {u: base - e})) / (2 * h)
    assert np.linalg.norm(Jac - fd) / np.linalg.norm(Jac) < 1e-6


def test_quotient_rule(V):
    u, v = _coef(V, 0), F.TestFunction(V)
    du = _coef(V, 1, "du")
    u.values = 2.0 + np.abs(u.values)
    got = assemble(F.gateaux_derivative(1.0 / u * v, u, du))
    np.testing.assert_allclose(got, assemble(-du / (u * u) * v), atol=1e-12)


def test_adjoint_of_symmetric_form(V):
    w, v = F.TrialFunction(V), F.TestFunction(V)
    a = w.dx() * v.dx()
    A = assemble(a).toarray()
    np.testing.assert_array_equal(assemble(F.adjoint_form(a)).toarray(), A)
    np.testing.assert_array_equal(A, A.T)


def test_adjoint_of_advection_is_transpose(V):
    c = _coef(V, 5, "c")
    w, v = F.TrialFunction(V), F.TestFunction(V)
    a = c * w.dx() * v
    np.testing.assert_array_equal(assemble(F.adjoint_form(a)).toarray(), assemble(a).toarray().T)


def test_adjoint_requires_bilinear(V):
    with pytest.raises(ArityError):
        F.adjoint_form(_coef(V, 0) * F.TestFunction(V))


def test_adjoint_of_zero_form(V):
    u, z = _coef(V, 0), _coef(V, 1, "z")
    zero = F.gateaux_derivative(z * F.TestFunction(V), u, F.TrialFunction(V))
    adj = F.adjoint_form(zero)
    assert isinstance(adj, F.Zero) and F.arity(adj) == 2
    assert assemble(adj).nnz == 0


def test_replace_identity_and_substitution(V):
    u, w, v = _coef(V, 0), _coef(V, 1, "w"), F.TestFunction(V)
    form = u * u.dx() * v
    assert str(F.replace(form, {u: u})) == str(form)
    np.testing.assert_array_equal(assemble(F.replace(form, {u: u})), assemble(form))
    np.testing.assert_array_equal(assemble(F.replace(u * v, {u: w})), assemble(w * v))


def test_replace_space_mismatch(V):
    u = _coef(V, 0)
    other = F.Coefficient(FunctionSpace(IntervalMesh(0.0, 1.0, 3), 1))
    with pytest.raises(SpaceMismatch):
        F.replace(u * F.TestFunction(V), {u: other})


# -- properties ----------------------------------------------------------------

_powers = st.integers(min_value=1, max_value=3)


@given(p=_powers, q=_powers, seed=st.integers(0, 10_000))
def test_gateaux_taylor_property(p, q, seed):
    # |F(u + h d) - F(u) - h J d| shrinks like h^2
    V = FunctionSpace(IntervalMesh(0.0, 1.0, 6), "P1")
    rng = np.random.default_rng(seed)
    u = F.Coefficient(V, rng.uniform(0.5, 1.5, V.dof_count))
    d = rng.standard_normal(V.dof_count)
    v = F.TestFunction(V)
    form = (u ** p) * u.dx() * v + (u ** q) * v.dx()
    jac = assemble(F.gateaux_derivative(form, u, F.TrialFunction(V)), {u: u.values}).toarray()
    base = assemble(form)

    def rem(h):
        return np.linalg.norm(assemble(form, {u: u.values + h * d}) - base - h * jac @ d)

    r1, r2 = rem(1e-3), rem(5e-4)
    assert r2 < 1e-13 or 3.5 < r1 / r2 < 4.5


@given(seed=st.integers(0, 10_000), degree=st.sampled_from(["P1", "P2"]))
def test_adjoint_involution_property(seed, degree):
    V = FunctionSpace(IntervalMesh(0.0, 1.0, 5), degree)
    c = F.Coefficient(V, np.random.default_rng(seed).standard_normal(V.dof_count))
    w, v = F.TrialFunction(V), F.TestFunction(V)
    a = c * w.dx() * v + c * c * w * v.dx()
    A = assemble(a).toarray()
    np.testing.assert_array_equal(assemble(F.adjoint_form(F.adjoint_form(a))).toarray(), A)
    np.testing.assert_array_equal(assemble(F.adjoint_form(a)).toarray(), A.T)
