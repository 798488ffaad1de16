"""Verification harness: Taylor remainder tests, dense oracles and growth checks."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .assembly import mass_matrix
from .exceptions import OracleMismatch
from .propagator import dense_matrix, propagator_from_tape
from .tape import adjoint_sweep, functional_gradient, functional_value, tlm_sweep

__all__ = [
    "TaylorReport", "taylor_test", "dense_svd", "dense_oracle_check", "OracleReport",
    "nonlinear_growth_check", "growth_curve", "dot_product_test", "gradient_consistency",
    "subspace_angle", "correlation",
]


def _orders(remainders):
    r = np.asarray(remainders, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log2(r[:-1] / r[1:])


@dataclass
class TaylorReport:
    """Remainders of a Taylor test, one row per step size.

    Orders are ``log2`` ratios of adjacent remainders, so there is one fewer
    order than step size. Rows whose remainder sits at the floating-point
    floor (below ``1e-12 |J|``) are flagged and excluded from
    :meth:`gated_orders`.
    """

    h_values: np.ndarray
    remainders_first: np.ndarray
    remainders_corrected: np.ndarray
    J0: float
    mode: str = "adjoint"
    orders_first: np.ndarray = field(init=False)
    orders_corrected: np.ndarray = field(init=False)
    at_floor: np.ndarray = field(init=False)

    def __post_init__(self):
        self.h_values = np.asarray(self.h_values, dtype=float)
        ratios = self.h_values[:-1] / self.h_values[1:]
        if not np.allclose(ratios, 2.0):
            raise ValueError("step sizes must halve from row to row")
        self.remainders_first = np.asarray(self.remainders_first, dtype=float)
        self.remainders_corrected = np.asarray(self.remainders_corrected, dtype=float)
        self.orders_first = _orders(self.remainders_first)
        self.orders_corrected = _orders(self.remainders_corrected)
        self.at_floor = self.remainders_corrected < 1e-12 * abs(self.J0)

    def gated_orders(self):
        """Orders between rows that are both above the floor."""
        ok = ~(self.at_floor[:-1] | self.at_floor[1:])
        return self.orders_first[ok], self.orders_corrected[ok]

    def rows(self):
        out = []
        for i, h in enumerate(self.h_values):
            o1 = self.orders_first[i - 1] if i else np.nan
            o2 = self.orders_corrected[i - 1] if i else np.nan
            out.append((h, self.remainders_first[i], o1, self.remainders_corrected[i], o2))
        return out

    def to_text(self):
        head = f"{'h':>10}  {'remainder':>12}  {'order':>6}  {'corrected':>12}  {'order':>6}"
        lines = [f"Taylor test ({self.mode} gradient)", head]
        for h, r1, o1, r2, o2 in self.rows():
            o1s = "" if np.isnan(o1) else f"{o1:.4f}"
            o2s = "" if np.isnan(o2) else f"{o2:.4f}"
            lines.append(f"{h:10.4e}  {r1:12.4e}  {o1s:>6}  {r2:12.4e}  {o2s:>6}")
        return "\n".join(lines)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["h", "remainder", "order", "corrected_remainder", "corrected_order"])
        for row in self.rows():
            writer.writerow(["" if np.isnan(v) else repr(float(v)) for v in row])
        return buf.getvalue()


def _direction(n, seed):
    return np.random.default_rng(seed).standard_normal(n)


def taylor_test(model, J=None, mode="adjoint", dm=None, h0=None, n_levels=5, seed=0, tape=None):
    """Taylor remainders of ``J(u_T(m))`` about the model's initial condition.

    The first-order remainder ``|J(m + h dm) - J(m)|`` should shrink like
    ``h`` and the corrected remainder ``|J(m + h dm) - J(m) - h dm . grad|``
    like ``h^2`` when the gradient is right. Step sizes are ``h0 2^-k`` for
    ``k < n_levels``; ``h0`` defaults to the model's ``taylor_h0``.
    """
    h0 = getattr(model, "taylor_h0", 1e-3) if h0 is None else h0
    J = model.default_functional() if J is None else J
    tape = tape if tape is not None else model.build_tape()
    m0 = np.array(tape.input_record.state)
    dm = _direction(m0.size, seed) if dm is None else np.asarray(dm, dtype=float)
    if not np.any(dm):
        raise ValueError("the perturbation direction must be nonzero")
    J0 = functional_value(tape, J)
    slope = float(dm @ functional_gradient(tape, J, mode))
    hs = h0 * 0.5 ** np.arange(n_levels)
    first, corrected = [], []
    for h in hs:
        Jh = model.functional(J, m0 + h * dm)
        first.append(abs(Jh - J0))
        corrected.append(abs(Jh - J0 - h * slope))
    return TaylorReport(hs, first, corrected, J0, mode)


def _cholesky(X):
    return la.cholesky(X.toarray() if hasattr(X, "toarray") else np.asarray(X))


def dense_svd(L, X_I, X_F):
    """SVD of a dense ``L`` with respect to the ``X_I`` and ``X_F`` norms.

    Returns ``U, sigma, V`` with ``L V = U diag(sigma)``, ``V^T X_I V = I`` and
    ``U^T X_F U = I``.
    """
    R_I, R_F = _cholesky(X_I), _cholesky(X_F)
    weighted = R_F @ L @ la.solve_triangular(R_I, np.eye(R_I.shape[0]))
    Ut, s, Vt = np.linalg.svd(weighted)
    U = la.solve_triangular(R_F, Ut)
    V = la.solve_triangular(R_I, Vt.T)
    return U, s, V


@dataclass
class OracleReport:
    n_probes: int
    max_probe_error: float
    max_vector_error: float
    sigmas: np.ndarray
    eps: float

    @property
    def passed(self):
        return self.max_probe_error < self.eps and self.max_vector_error < self.eps


def dense_oracle_check(model, n_probes=100, eps=1e-7, seed=0, tape=None, max_dim=200):
    """Compare a dense SVD of ``L`` with matrix-free propagator actions.

    ``L`` is assembled column by column from tangent linear sweeps and
    decomposed densely (in the mass-matrix norms). For random ``t`` with
    entries from U(0, 1) the reconstruction ``U S V* t`` must match a fresh
    ``L t``, and ``u - L v / sigma`` must vanish for every singular pair with
    ``sigma > 1e-10``.

    Raises
    ------
    OracleMismatch
        On the first failing probe or vector.
    """
    tape = tape if tape is not None else model.build_tape()
    L = propagator_from_tape(tape)
    X_I, X_F = mass_matrix(L.input_space), mass_matrix(L.output_space)
    Ld = dense_matrix(L, max_dim=max_dim)
    U, s, V = dense_svd(Ld, X_I, X_F)
    k = len(s)
    # V* is the X_I-adjoint of V
    reconstruction = (U[:, :k] * s) @ (V[:, :k].T @ X_I.toarray())
    rng = np.random.default_rng(seed)
    worst_probe = 0.0
    for i in range(n_probes):
        t = rng.uniform(0.0, 1.0, L.in_dim)
        err = np.linalg.norm(reconstruction @ t - L.apply(t))
        worst_probe = max(worst_probe, err)
        if not err < eps:
            raise OracleMismatch(f"probe {i}: |U S V* t - L t| = {err:.3e} >= {eps:g}",
                                 probe=t, error=err)
    worst_vec = 0.0
    for i in np.flatnonzero(s > 1e-10):
        err = np.linalg.norm(U[:, i] - L.apply(V[:, i]) / s[i])
        worst_vec = max(worst_vec, err)
        if not err < eps:
            raise OracleMismatch(f"singular vector {i}: |u - L v / sigma| = {err:.3e} >= {eps:g}",
                                 probe=V[:, i], error=err)
    return OracleReport(n_probes, worst_probe, worst_vec, s, eps)


def _norm(X, x):
    return float(np.sqrt(max(x @ (X @ x), 0.0)))


def nonlinear_growth_check(model, triplet, amplitude=None, X_I=None, X_F=None):
    """Predicted and observed growth of the perturbation ``triplet.v``.

    The model is run from ``m0`` and from ``m0 + amplitude * v``; the observed
    growth is the ``X_F`` norm of the difference of the final states divided
    by the ``X_I`` norm of the initial perturbation. ``amplitude`` defaults to
    ``1e-7 ||m0||_{X_I} / ||v||_{X_I}``.

    Returns
    -------
    predicted, observed : float
    """
    X_I = mass_matrix(model.input_space) if X_I is None else X_I
    X_F = mass_matrix(model.output_space) if X_F is None else X_F
    m0 = model.initial_state()
    v = np.asarray(triplet.v, dtype=float)
    if amplitude is None:
        amplitude = 1e-7 * _norm(X_I, m0) / _norm(X_I, v)
    base = model.forward(m0)
    perturbed = model.forward(m0 + amplitude * v)
    observed = _norm(X_F, perturbed - base) / (amplitude * _norm(X_I, v))
    return float(triplet.sigma), observed


def growth_curve(model, v, n_steps=None, amplitude=None, X=None):
    """Nonlinear growth ``||u'(t) - u(t)|| / ||u'(0) - u(0)||`` at every step.

    Returns an array with columns ``t`` and the norm ratio; the first row is
    ``(0, 1)``.
    """
    X = mass_matrix(model.output_space) if X is None else X
    m0 = model.initial_state()
    v = np.asarray(v, dtype=float)
    if amplitude is None:
        amplitude = 1e-7 * _norm(X, m0) / _norm(X, v)
    base = model.trajectory(m0, n_steps=n_steps)
    pert = model.trajectory(m0 + amplitude * v, n_steps=n_steps)
    d0 = _norm(X, pert[0] - base[0])
    ratios = np.array([_norm(X, p - b) / d0 for p, b in zip(pert, base)])
    t = model.dt * np.arange(len(ratios))
    return np.column_stack([t, ratios])


def dot_product_test(tape, n_pairs=100, seed=0):
    """Largest ``|<L x, y> - <x, L* y>| / (|x| |y|)`` over random pairs."""
    rng = np.random.default_rng(seed)
    n_in, n_out = tape.input_space.dof_count, tape.output_space.dof_count
    worst = 0.0
    for _ in range(n_pairs):
        x, y = rng.standard_normal(n_in), rng.standard_normal(n_out)
        gap = abs(tlm_sweep(tape, x) @ y - x @ adjoint_sweep(tape, y))
        worst = max(worst, gap / (np.linalg.norm(x) * np.linalg.norm(y)))
    return worst


def gradient_consistency(tape, J):
    """Relative difference between the tangent linear and adjoint gradients."""
    g_adj = functional_gradient(tape, J, "adjoint")
    g_tlm = functional_gradient(tape, J, "tlm")
    scale = max(np.linalg.norm(g_adj), np.finfo(float).tiny)
    return float(np.linalg.norm(g_adj - g_tlm) / scale)


def correlation(x, y, X=None):
    """Cosine of the angle between ``x`` and ``y`` in the ``X`` inner product."""
    Xy = y if X is None else X @ y
    Xx = x if X is None else X @ x
    return float(x @ Xy / np.sqrt((x @ Xx) * (y @ Xy)))


def subspace_angle(A, B, X=None):
    """Largest principal angle between the column spans of ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float).T).T
    B = np.atleast_2d(np.asarray(B, dtype=float).T).T
    if X is not None:
        R = _cholesky(X)
        A, B = R @ A, R @ B
    return float(np.max(la.subspace_angles(A, B)))
