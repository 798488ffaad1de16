import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from autogst.assembly import mass_matrix
from autogst.eigensolver import LanczosParams, compute_gst, gst_from_tape, lanczos_thick_restart
from autogst.exceptions import BreakdownError, NonConvergence
from autogst.models import burgers_model, heat_model, scalar_ode_model
from autogst.propagator import LinearOperator, gst_operator, propagator_from_tape

# Frozen from tests/oracles.py: independent P1 Burgers (nu=1e-4, 30 cells,
# dt=1/30, 6 implicit Euler steps), complex-step Jacobian, generalised eigh.
BURGERS_P1_SIGMA = [4.79401653, 1.47467525, 1.15780097, 0.7447513, 0.70663534]
# closed-form P1 heat propagator (kappa=1, 20 cells, dt=1e-3, 5 steps)
HEAT_SIGMA = [0.95198438, 0.82270137, 0.64849599, 0.46965194, 0.31529921]


def test_diagonal_spectrum():
    pairs = lanczos_thick_restart(np.diag([4.0, 1.0, 0.25]), LanczosParams(nev=2))
    np.testing.assert_allclose([p.mu for p in pairs], [4.0, 1.0], rtol=1e-12)


@given(seed=st.integers(0, 2 ** 31))
def test_random_spd_matches_dense(seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((40, 40)))
    spectrum = np.sort(rng.uniform(0.1, 10.0, 40))[::-1]
    spectrum[:5] = [20.0, 17.0, 14.0, 12.0, 11.0]  # keep the leading five separated
    A = (Q * spectrum) @ Q.T
    A = 0.5 * (A + A.T)
    pairs = lanczos_thick_restart(A, LanczosParams(nev=5, seed=seed % 1000))
    exact = la.eigh(A, eigvals_only=True)[::-1][:5]
    np.testing.assert_allclose([p.mu for p in pairs], exact, rtol=1e-8)
    X = np.column_stack([p.vector for p in pairs])
    assert np.abs(X.T @ X - np.eye(5)).max() < 1e-10


def test_heat_gst_matches_dense_generalised(heat_tape):
    L = propagator_from_tape(heat_tape)
    G = gst_operator(L)
    pairs = lanczos_thick_restart(G, LanczosParams(nev=5))
    np.testing.assert_allclose([p.mu for p in pairs], np.square(HEAT_SIGMA), rtol=1e-7)
    M = mass_matrix(L.input_space)
    X = np.column_stack([p.vector for p in pairs])
    assert np.abs(X.T @ (M @ X) - np.eye(5)).max() < 1e-10


def test_burgers_p1_against_independent_oracle():
    triplets = compute_gst(burgers_model(element="P1"), nev=5)
    np.testing.assert_allclose([t.sigma for t in triplets], BURGERS_P1_SIGMA, rtol=1e-7)


def test_triplet_invariants(burgers, burgers_tape):
    triplets = gst_from_tape(burgers_tape, LanczosParams(nev=4))
    M = mass_matrix(burgers.input_space)
    L = propagator_from_tape(burgers_tape)
    sigmas = [t.sigma for t in triplets]
    assert sigmas == sorted(sigmas, reverse=True)
    for t in triplets:
        assert t.v @ M @ t.v == pytest.approx(1.0, abs=1e-8)
        assert t.u @ M @ t.u == pytest.approx(1.0, abs=1e-6)
        assert np.linalg.norm(t.u - L.apply(t.v) / t.sigma) < 1e-7
        assert t.sigma == pytest.approx(np.sqrt(t.mu))
        assert t.residual <= 1e-8 * max(t.mu, 1.0)


def test_zero_steps_all_sigma_one():
    triplets = compute_gst(burgers_model(n_steps=0), nev=3)
    np.testing.assert_allclose([t.sigma for t in triplets], 1.0, rtol=1e-12)


def test_identity_operator_uses_breakdown_restarts():
    pairs = lanczos_thick_restart(np.eye(10), LanczosParams(nev=3))
    np.testing.assert_allclose([p.mu for p in pairs], 1.0)
    X = np.column_stack([p.vector for p in pairs])
    np.testing.assert_allclose(X.T @ X, np.eye(3), atol=1e-12)


def test_scalar_ode_degenerate_pair():
    model = scalar_ode_model()
    triplets = compute_gst(model, nev=2)
    expected = (1.0 / 1.1) ** 5
    np.testing.assert_allclose([t.sigma for t in triplets], expected, rtol=1e-12)


def test_nonconvergence_carries_best_pairs():
    A = np.diag(np.linspace(1.0, 1.001, 300))
    with pytest.raises(NonConvergence) as info:
        lanczos_thick_restart(A, LanczosParams(nev=4, ncv=8, tol=1e-14, max_restarts=1))
    assert len(info.value.best) == 4
    assert info.value.residual_norm > 0


def test_nev_exceeding_dimension():
    with pytest.raises(ValueError):
        lanczos_thick_restart(np.ones((1, 1)), LanczosParams(nev=2, ncv=3))


def test_breakdown_error_when_no_direction_remains():
    class Degenerate:
        shape = (4, 4)

        @staticmethod
        def apply(x):
            return np.zeros(4)

        class B:
            def __matmul__(self, x):
                return 0.0 * x

        B = B()

    with pytest.raises(BreakdownError):
        lanczos_thick_restart(Degenerate(), LanczosParams(nev=2, ncv=3))


@pytest.mark.parametrize("kwargs", [dict(nev=0), dict(nev=3, ncv=3), dict(tol=0.0), dict(max_restarts=-1)])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        LanczosParams(**kwargs)


def test_default_subspace_size():
    assert LanczosParams(nev=1).subspace_size == 12
    assert LanczosParams(nev=10).subspace_size == 22


def test_seeded_determinism(burgers_tape):
    a = gst_from_tape(burgers_tape, LanczosParams(nev=3, seed=7))
    b = gst_from_tape(burgers_tape, LanczosParams(nev=3, seed=7))
    for s, t in zip(a, b):
        assert s.sigma == t.sigma
        np.testing.assert_array_equal(s.v, t.v)


def test_sparse_matrix_input():
    A = sp.diags(np.arange(1.0, 51.0)).tocsr()
    pairs = lanczos_thick_restart(A, LanczosParams(nev=3))
    np.testing.assert_allclose([p.mu for p in pairs], [50.0, 49.0, 48.0], rtol=1e-10)


def test_custom_norms(heat_tape):
    L = propagator_from_tape(heat_tape)
    n = L.in_dim
    I = sp.identity(n, format="csr")
    triplets = gst_from_tape(heat_tape, LanczosParams(nev=2), X_I=I, X_F=I)
    Ld = np.column_stack([L.apply(e) for e in np.eye(n)])
    np.testing.assert_allclose([t.sigma for t in triplets], np.linalg.svd(Ld, compute_uv=False)[:2],
                               rtol=1e-8)
