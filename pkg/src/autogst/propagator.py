"""Matrix-free linear operators: the propagator and the GST operator.

The propagator ``L`` maps a perturbation of the initial condition to the
resulting perturbation of the final state. Its action is one tangent linear
sweep over the tape and its Hermitian action one adjoint sweep. The GST
operator ``G = X_I^-1 L* X_F L`` is self-adjoint in the ``X_I`` inner
product; its eigenvalues are the squared singular values of ``L`` measured in
the ``X_I`` and ``X_F`` norms.
"""

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .assembly import mass_matrix
from .exceptions import DimensionMismatch, InvalidInnerProduct, SingularSystem
from .solvers import factorize
from .tape import adjoint_sweep, tlm_sweep, _require_sealed

__all__ = [
    "LinearOperator", "propagator_from_tape", "GstOperator", "gst_operator",
    "dense_matrix", "coo_text",
]


class LinearOperator:
    """A linear map known only through its action.

    Parameters
    ----------
    in_dim, out_dim : int
        Dimensions of the domain and range.
    apply : callable
        ``x -> A x``.
    apply_hermitian : callable, optional
        ``y -> A^T y`` (Euclidean transpose).
    """

    def __init__(self, in_dim, out_dim, apply, apply_hermitian=None, name="operator"):
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self._apply = apply
        self._apply_hermitian = apply_hermitian
        self.name = name

    @property
    def shape(self):
        return (self.out_dim, self.in_dim)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.in_dim,):
            raise DimensionMismatch(f"{self.name}: expected input of length {self.in_dim}, got {x.shape}")
        return self._apply(x)

    def apply_hermitian(self, y):
        if self._apply_hermitian is None:
            raise NotImplementedError(f"{self.name} has no Hermitian action")
        y = np.asarray(y, dtype=float)
        if y.shape != (self.out_dim,):
            raise DimensionMismatch(f"{self.name}: expected input of length {self.out_dim}, got {y.shape}")
        return self._apply_hermitian(y)

    def __matmul__(self, x):
        return self.apply(x)

    @property
    def T(self):
        return LinearOperator(self.out_dim, self.in_dim, self.apply_hermitian, self.apply,
                              name=f"{self.name}^T")

    @classmethod
    def from_matrix(cls, A, name="matrix"):
        A = sp.csr_matrix(A) if sp.issparse(A) else np.asarray(A, dtype=float)
        return cls(A.shape[1], A.shape[0], lambda x: A @ x, lambda y: A.T @ y, name=name)


class Propagator(LinearOperator):
    """Tangent linear propagator of a sealed tape."""

    def __init__(self, tape):
        _require_sealed(tape)
        self.tape = tape
        self.input_space = tape.input_space
        self.output_space = tape.output_space
        super().__init__(
            self.input_space.dof_count, self.output_space.dof_count,
            lambda x: tlm_sweep(tape, x), lambda y: adjoint_sweep(tape, y),
            name="L")


def propagator_from_tape(tape):
    """``L`` with ``apply = tlm_sweep`` and ``apply_hermitian = adjoint_sweep``."""
    return Propagator(tape)


def _spd_factor(X, label):
    X = sp.csr_matrix(X)
    n = X.shape[0]
    if X.shape != (n, n):
        raise InvalidInnerProduct(f"{label} must be square, got {X.shape}")
    scale = abs(X).max() if X.nnz else 0.0
    if scale == 0.0 or abs(X - X.T).max() > 1e-12 * scale:
        raise InvalidInnerProduct(f"{label} is not symmetric")
    if n <= 4000:
        try:
            la.cholesky(X.toarray())
        except la.LinAlgError as exc:
            raise InvalidInnerProduct(f"{label} is not positive definite") from exc
    else:
        probes = np.random.default_rng(0).standard_normal((n, 8))
        if np.any(np.einsum("ij,ij->j", probes, X @ probes) <= 0):
            raise InvalidInnerProduct(f"{label} is not positive definite")
    try:
        return X, factorize(X)
    except SingularSystem as exc:
        raise InvalidInnerProduct(f"{label} is singular") from exc


class GstOperator:
    """``G = X_I^-1 L* X_F L`` with the inner products it is built from.

    ``L*`` is the Euclidean transpose supplied by ``L.apply_hermitian``; the
    norms enter only through ``X_I`` and ``X_F``.
    """

    def __init__(self, L, X_I, X_F):
        if X_I.shape != (L.in_dim, L.in_dim):
            raise DimensionMismatch(f"X_I has shape {X_I.shape}, L has input dimension {L.in_dim}")
        if X_F.shape != (L.out_dim, L.out_dim):
            raise DimensionMismatch(f"X_F has shape {X_F.shape}, L has output dimension {L.out_dim}")
        self.L = L
        self.X_I, self._solver = _spd_factor(X_I, "X_I")
        self.X_F, _ = _spd_factor(X_F, "X_F")
        self.n = L.in_dim

    @property
    def shape(self):
        return (self.n, self.n)

    def apply(self, x):
        return self.solve_input(self.L.apply_hermitian(self.X_F @ self.L.apply(x)))

    __matmul__ = apply

    def solve_input(self, y):
        """``X_I^-1 y``."""
        return self._solver.solve(y)

    def inner_input(self, x, y):
        return float(x @ (self.X_I @ y))

    def inner_output(self, x, y):
        return float(x @ (self.X_F @ y))

    def norm_input(self, x):
        return np.sqrt(max(self.inner_input(x, x), 0.0))

    def norm_output(self, x):
        return np.sqrt(max(self.inner_output(x, x), 0.0))


def gst_operator(L, X_I=None, X_F=None):
    """Build ``G``; missing norms default to the mass matrices of the spaces."""
    if X_I is None:
        X_I = _default_norm(L, "input_space", L.in_dim)
    if X_F is None:
        X_F = _default_norm(L, "output_space", L.out_dim)
    return GstOperator(L, X_I, X_F)


def _default_norm(L, attr, n):
    space = getattr(L, attr, None)
    if space is None:
        return sp.identity(n, format="csr")
    return mass_matrix(space)


def dense_matrix(L, max_dim=200):
    """Dense ``L`` built column by column from its action."""
    if max(L.in_dim, L.out_dim) > max_dim:
        raise ValueError(f"refusing to densify an operator of shape {L.shape} (limit {max_dim})")
    out = np.empty((L.out_dim, L.in_dim))
    e = np.zeros(L.in_dim)
    for j in range(L.in_dim):
        e[j] = 1.0
        out[:, j] = L.apply(e)
        e[j] = 0.0
    return out


def coo_text(A, tol=0.0):
    """Coordinate-list text of a matrix: a header line then ``row col value`` rows."""
    A = sp.coo_matrix(A)
    keep = np.abs(A.data) > tol
    lines = [f"{A.shape[0]} {A.shape[1]} {int(keep.sum())}"]
    order = np.lexsort((A.col[keep], A.row[keep]))
    for i, j, v in zip(A.row[keep][order], A.col[keep][order], A.data[keep][order]):
        lines.append(f"{i} {j} {float(v)!r}")
    return "\n".join(lines) + "\n"
