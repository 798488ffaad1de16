"""Direct sparse linear solves and Newton's method for variational problems."""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import forms as F
from .assembly import apply_bcs, assemble, bc_dofs
from .exceptions import NonConvergence, SingularSystem

logger = logging.getLogger(__name__)

__all__ = ["NewtonParams", "solve_linear", "factorize", "newton_solve"]


@dataclass(frozen=True)
class NewtonParams:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_iter: int = 30

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("Newton tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


class Factorization:
    """Sparse LU factors of a square matrix with residual-checked solves."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.A = A
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                self.lu = spla.splu(A)
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise SingularSystem(str(exc)) from exc
        diag = np.abs(self.lu.U.diagonal())
        if diag.size and (not np.all(np.isfinite(diag)) or diag.min() <= 1e-14 * diag.max()):
            raise SingularSystem("matrix is numerically singular")

    def solve(self, b, trans="N"):
        b = np.asarray(b, dtype=float)
        x = self.lu.solve(b, trans=trans)
        op = self.A if trans == "N" else self.A.T
        norm_b = np.linalg.norm(b)
        for _ in range(3):
            r = b - op @ x
            if np.linalg.norm(r) <= 1e-10 * norm_b:
                break
            x = x + self.lu.solve(r, trans=trans)
        if not np.all(np.isfinite(x)):
            raise SingularSystem("non-finite solution")
        return x


def factorize(A):
    return Factorization(A)


def solve_linear(A, b):
    """Solve ``A x = b`` by sparse LU with up to three refinement steps.

    Raises :class:`SingularSystem` if the factorisation breaks down.
    """
    return Factorization(A).solve(b)


def _residual(residual, unknown, bcs, values):
    r = assemble(residual, {unknown: values})
    r[bc_dofs(bcs)] = 0.0
    return r


def newton_solve(residual, unknown, bcs=(), params=None, tape=None):
    """Solve ``residual(unknown) = 0`` in place by Newton's method.

    The unknown's current values are the initial guess. Boundary values are
    imposed on the guess; each update then satisfies the homogenised
    conditions. The Jacobian is the Gateaux derivative of ``residual`` in the
    direction of a trial function.

    Returns
    -------
    unknown : Coefficient
        The same object, holding the converged values.
    iterations : int
        Number of Newton updates taken.
    """
    params = params or NewtonParams()
    if F.arity(residual) != 1:
        raise ValueError("the residual must be a linear form (arity 1)")
    space = unknown.space
    jacobian = _jacobian_form(residual, unknown)
    u = np.zeros(space.dof_count) if unknown.values is None else unknown.values.copy()
    for bc in bcs:
        u[bc.dofs()] = bc.boundary_values()
    homogeneous = [bc.homogenize() for bc in bcs]

    r = _residual(residual, unknown, bcs, u)
    norm0 = norm = np.linalg.norm(r)
    iterations = 0
    while not (norm <= params.abs_tol or norm <= params.rel_tol * norm0):
        if iterations >= params.max_iter:
            raise NonConvergence(
                f"Newton did not converge in {params.max_iter} iterations "
                f"(residual {norm:.3e})", residual_norm=norm)
        J = assemble(jacobian, {unknown: u})
        J, rhs = apply_bcs(J, -r, homogeneous, mode="homogenised")
        u = u + solve_linear(J, rhs)
        iterations += 1
        r = _residual(residual, unknown, bcs, u)
        norm = np.linalg.norm(r)
        logger.debug("newton %d: |F| = %.3e", iterations, norm)
        if not np.isfinite(norm):
            raise NonConvergence("Newton diverged", residual_norm=norm)
    unknown.values = u
    if tape is not None:
        tape.record_solve(unknown, residual, bcs=bcs)
    return unknown, iterations


_JACOBIANS = {}


def _jacobian_form(residual, unknown):
    key = (residual, unknown)
    if key not in _JACOBIANS:
        if len(_JACOBIANS) > 256:
            _JACOBIANS.clear()
        _JACOBIANS[key] = F.gateaux_derivative(residual, unknown, F.TrialFunction(unknown.space))
    return _JACOBIANS[key]
