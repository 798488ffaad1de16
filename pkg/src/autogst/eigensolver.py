"""Thick-restart Lanczos for operators self-adjoint in a mass-matrix inner product.

The basis is kept orthonormal in the ``B`` inner product (``B = X_I`` for the
GST operator) with full reorthogonalisation, so the projected matrix is real
symmetric: tridiagonal on the first cycle and arrowhead plus tridiagonal
after each restart.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import BreakdownError, NonConvergence
from .propagator import gst_operator, propagator_from_tape

logger = logging.getLogger(__name__)

__all__ = [
    "LanczosParams", "SingularTriplet", "EigenPair", "lanczos_thick_restart",
    "compute_gst", "gst_from_tape",
]

# a Krylov vector is treated as lying in the current subspace once the part of
# G v orthogonal to it is this small relative to G v itself
BREAKDOWN_RTOL = 1e-12
MAX_BREAKDOWNS = 3


@dataclass(frozen=True)
class LanczosParams:
    """Parameters of :func:`lanczos_thick_restart`.

    ``ncv`` defaults to ``max(2 * nev + 2, 12)`` and is clamped to the
    problem dimension at run time.
    """

    nev: int = 1
    ncv: int = None
    tol: float = 1e-8
    max_restarts: int = 200
    seed: int = 0

    def __post_init__(self):
        if int(self.nev) != self.nev or self.nev < 1:
            raise ValueError(f"nev must be a positive integer, got {self.nev}")
        if self.ncv is not None and self.ncv <= self.nev:
            raise ValueError(f"ncv ({self.ncv}) must exceed nev ({self.nev})")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be non-negative")

    @property
    def subspace_size(self):
        return self.ncv if self.ncv is not None else max(2 * self.nev + 2, 12)


@dataclass
class EigenPair:
    mu: float
    vector: np.ndarray
    residual: float
    info: dict = field(default_factory=dict)


@dataclass
class SingularTriplet:
    """Growth factor ``sigma``, optimal initial perturbation ``v`` and its image ``u``.

    ``v`` has unit ``X_I`` norm and ``u = L v / ||L v||_{X_F}``.
    """

    sigma: float
    v: np.ndarray
    u: np.ndarray
    residual: float
    mu: float = None
    info: dict = field(default_factory=dict)


class _Identity:
    def __matmul__(self, x):
        return x


def _operator_parts(G):
    """``(n, apply, B)`` for a GstOperator, a matrix or a bare linear operator."""
    if hasattr(G, "X_I"):
        return G.n, G.apply, G.X_I
    if sp.issparse(G) or isinstance(G, np.ndarray):
        A = G
        return A.shape[0], lambda x: A @ x, _Identity()
    return G.shape[0], G.apply, getattr(G, "B", _Identity())


def lanczos_thick_restart(G, params=None):
    """Leading eigenpairs of ``G``, largest first.

    Parameters
    ----------
    G : GstOperator, ndarray or sparse matrix
        Operator self-adjoint in its ``X_I`` inner product (the identity for
        plain matrices, which must then be symmetric).
    params : LanczosParams

    Returns
    -------
    list of EigenPair
        ``mu`` descending; vectors ``B``-orthonormal; ``residual`` is the
        explicitly computed ``||G v - mu v||_B``.

    Raises
    ------
    NonConvergence
        After ``max_restarts`` restarts; ``best`` holds the current pairs.
    BreakdownError
        If repeated breakdowns make no progress.
    """
    params = params or LanczosParams()
    n, apply, B = _operator_parts(G)
    nev = params.nev
    if nev > n:
        raise ValueError(f"nev={nev} exceeds the problem dimension {n}")
    ncv = min(params.subspace_size, n)
    rng = np.random.default_rng(params.seed)

    V = np.zeros((n, ncv + 1))
    BV = np.zeros((n, ncv + 1))
    H = np.zeros((ncv + 1, ncv + 1))

    def b_orthonormal(w, k):
        for _ in range(2):
            w = w - V[:, :k] @ (BV[:, :k].T @ w)
        Bw = B @ w
        norm = np.sqrt(max(float(w @ Bw), 0.0))
        return w, Bw, norm

    def fresh(k):
        w, Bw, norm = b_orthonormal(rng.standard_normal(n), k)
        if norm <= 1e-10 * np.sqrt(n):
            raise BreakdownError("no direction left to restart the Lanczos iteration")
        V[:, k], BV[:, k] = w / norm, Bw / norm

    fresh(0)
    k = 0
    restarts = breakdowns = applies = 0
    converged_at_breakdown = -1
    while True:
        j, beta, broke = k, 0.0, False
        while j < ncv:
            w = apply(V[:, j])
            applies += 1
            scale = np.sqrt(max(float(w @ (B @ w)), 0.0))
            coef = np.zeros(j + 1)
            for _ in range(2):
                c = BV[:, :j + 1].T @ w
                w = w - V[:, :j + 1] @ c
                coef += c
            H[:j + 1, j] = coef
            Bw = B @ w
            beta = np.sqrt(max(float(w @ Bw), 0.0))
            if beta <= BREAKDOWN_RTOL * scale or scale == 0.0:
                broke, beta = True, 0.0
                j += 1
                break
            H[j + 1, j] = beta
            V[:, j + 1], BV[:, j + 1] = w / beta, Bw / beta
            j += 1
        m = j
        T = H[:m, :m]
        theta, Y = np.linalg.eigh(0.5 * (T + T.T))
        order = np.argsort(theta)[::-1]
        theta, Y = theta[order], Y[:, order]
        estimates = np.abs(beta * Y[m - 1, :])
        converged = estimates <= params.tol * np.maximum(np.abs(theta), 1.0)
        n_conv = int(np.sum(converged[:nev]))
        logger.debug("lanczos restart %d: m=%d converged=%d/%d", restarts, m, n_conv, nev)

        if m >= nev and n_conv == nev:
            break
        if broke:
            # invariant subspace: every Ritz pair in it is exact; keep them and
            # continue from a fresh direction
            if n_conv > converged_at_breakdown:
                breakdowns = 0
                converged_at_breakdown = n_conv
            breakdowns += 1
            if breakdowns > MAX_BREAKDOWNS:
                raise BreakdownError(
                    f"Lanczos broke down {breakdowns} times without progress "
                    f"({n_conv} of {nev} pairs converged)")
            keep = min(m, ncv - 1)
        else:
            restarts += 1
            if restarts > params.max_restarts:
                best = _finalise(V, m, theta, Y, nev, apply, B)
                raise NonConvergence(
                    f"Lanczos did not converge in {params.max_restarts} restarts "
                    f"({n_conv} of {nev} pairs converged)",
                    residual_norm=float(estimates[:nev].max()), best=best)
            keep = min(max(nev + (m - nev) // 2, n_conv), m - 1)

        Yk = Y[:, :keep]
        V[:, :keep] = V[:, :m] @ Yk
        BV[:, :keep] = BV[:, :m] @ Yk
        H[:] = 0.0
        H[:keep, :keep] = np.diag(theta[:keep])
        if broke:
            fresh(keep)
        else:
            V[:, keep], BV[:, keep] = V[:, m], BV[:, m]
            H[keep, :keep] = beta * Y[m - 1, :keep]
        k = keep

    pairs = _finalise(V, m, theta, Y, nev, apply, B)
    for p in pairs:
        p.info = {"restarts": restarts, "applies": applies}
    return pairs


def _finalise(V, m, theta, Y, nev, apply, B):
    X = V[:, :m] @ Y[:, :nev]
    pairs = []
    for i in range(nev):
        x = X[:, i]
        x = x / np.sqrt(float(x @ (B @ x)))
        r = apply(x) - theta[i] * x
        res = np.sqrt(max(float(r @ (B @ r)), 0.0))
        pairs.append(EigenPair(float(theta[i]), x, res))
    return pairs


def gst_from_tape(tape, params=None, X_I=None, X_F=None):
    """Singular triplets of the propagator recorded on ``tape``."""
    params = params or LanczosParams()
    L = propagator_from_tape(tape)
    G = gst_operator(L, X_I, X_F)
    triplets = []
    for pair in lanczos_thick_restart(G, params):
        if pair.mu < -params.tol:
            warnings.warn(f"eigenvalue {pair.mu:.3e} of G is negative beyond tolerance",
                          RuntimeWarning, stacklevel=2)
        sigma = np.sqrt(max(pair.mu, 0.0))
        Lv = L.apply(pair.vector)
        norm = G.norm_output(Lv)
        u = Lv / norm if norm > 0 else np.zeros_like(Lv)
        triplets.append(SingularTriplet(sigma, pair.vector, u, pair.residual, pair.mu, pair.info))
    triplets.sort(key=lambda t: -t.sigma)
    return triplets


def compute_gst(model, nev=None, params=None, X_I=None, X_F=None):
    """Run ``model`` forward, then compute its leading singular triplets.

    Parameters
    ----------
    model : ModelSpec
        Anything with a ``build_tape()`` method returning a sealed tape.
    nev : int, optional
        Overrides ``params.nev``.
    params : LanczosParams, optional
    X_I, X_F : sparse matrix, optional
        Norms on the input and output spaces; mass matrices by default.
    """
    params = params or LanczosParams()
    if nev is not None:
        params = LanczosParams(nev=nev, ncv=params.ncv if (params.ncv or 0) > nev else None,
                               tol=params.tol, max_restarts=params.max_restarts, seed=params.seed)
    return gst_from_tape(model.build_tape(), params, X_I, X_F)
