"""Assembly of forms into matrices, vectors and scalars; Dirichlet conditions.

Integrands are evaluated at Gauss points cell by cell. During evaluation an
expression becomes a small polynomial in the arguments: a mapping from
``(test_key, trial_key)`` to the coefficient multiplying that pair of basis
functions, where a key is ``(component, derivative_order)`` or ``None``.
Element tensors are then contracted against basis tables and scattered.
"""

from dataclasses import dataclass, replace as dc_replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import forms as F
from .exceptions import ArityError, InvalidBC, ShapeError, UnboundSymbol
from .mesh import CellTables, FunctionSpace

__all__ = ["assemble", "DirichletBC", "apply_bc", "apply_bcs", "mass_matrix", "homogenize"]


@lru_cache(maxsize=64)
def _tables(space, degree):
    return CellTables(space, degree)


@lru_cache(maxsize=512)
def _prepare(form):
    expanded = F.expand_derivatives(form)
    return expanded, F.arguments(expanded)


def _spaces(expr):
    out = []
    for node in F._walk(expr):
        if isinstance(node, (F.Argument, F.Coefficient)):
            out.append(node.space)
        elif isinstance(node, F.Zero):
            out.extend(a.space for a in node.arguments)
    return out


def _terminal_chain(expr):
    """Split ``Dx``/``Component`` wrappers off a terminal."""
    order, index = 0, None
    node = expr
    while isinstance(node, (F.Dx, F.Component)):
        if isinstance(node, F.Dx):
            order += 1
        else:
            if index is not None:
                raise ShapeError(f"nested component access in {expr}")
            index = node.index
        node = node.operand
    space = node.space
    if index is None:
        if space.components != 1:
            raise ShapeError(f"{node} has {space.components} components; index it before use")
        index = 0
    elif not 0 <= index < space.components:
        raise ShapeError(f"component {index} out of range in {expr}")
    return node, index, order


class _Evaluator:
    def __init__(self, bindings, degree):
        self.bindings = bindings
        self.degree = degree
        self._cache = {}

    def values_of(self, coefficient):
        values = self.bindings.get(coefficient)
        if values is None:
            values = coefficient.values
        if values is None:
            raise UnboundSymbol(f"coefficient {coefficient.name!r} has no values")
        return values

    def __call__(self, expr):
        if isinstance(expr, F.Constant):
            return {(None, None): expr.value}
        if isinstance(expr, F.Zero):
            return {}
        if isinstance(expr, (F.Argument, F.Coefficient, F.Dx, F.Component)):
            return self.terminal(expr)
        if isinstance(expr, F.Sum):
            out = dict(self(expr.left))
            for key, value in self(expr.right).items():
                out[key] = out[key] + value if key in out else value
            return out
        if isinstance(expr, F.Negation):
            return {key: -value for key, value in self(expr.operand).items()}
        if isinstance(expr, F.Product):
            left, right = self(expr.left), self(expr.right)
            out = {}
            for (lt, lr), lv in left.items():
                for (rt, rr), rv in right.items():
                    key = (lt if lt is not None else rt, lr if lr is not None else rr)
                    value = lv * rv
                    out[key] = out[key] + value if key in out else value
            return out
        if isinstance(expr, F.Quotient):
            den = self(expr.denominator).get((None, None), 0.0)
            return {key: value / den for key, value in self(expr.numerator).items()}
        if isinstance(expr, F.Power):
            base = self(expr.base)
            if expr.exponent == 1:
                return base
            scalar = base.get((None, None), 0.0)
            return {(None, None): scalar ** expr.exponent}
        raise TypeError(f"cannot evaluate {type(expr).__name__}")

    def terminal(self, expr):
        node, component, order = _terminal_chain(expr)
        if isinstance(node, F.Argument):
            key = (component, order)
            return {(key, None) if node.number == 0 else (None, key): 1.0}
        cache_key = (node.id, component, order)
        if cache_key not in self._cache:
            tables = _tables(node.space, self.degree)
            self._cache[cache_key] = tables.evaluate(self.values_of(node), component, order)
        return {(None, None): self._cache[cache_key]}


def assemble(form, coefficients=None, mesh=None, quadrature_degree=None):
    """Integrate ``form`` over its mesh.

    Parameters
    ----------
    form : FormExpr
        Integrand of arity 0, 1 or 2.
    coefficients : dict, optional
        ``Coefficient -> dof vector`` overrides; other coefficients use their
        own ``values``.
    mesh : IntervalMesh, optional
        Needed only when the form contains no function at all.
    quadrature_degree : int, optional
        Defaults to ``2 * p + 1`` for the highest element order ``p`` present.

    Returns
    -------
    float, ndarray or scipy.sparse.csr_matrix
        Scalar, vector (indexed by test dofs) or matrix (test dofs x trial
        dofs) depending on the arity.
    """
    form = F.as_form(form)
    expr, args = _prepare(form)
    spaces = _spaces(form)
    meshes = {s.mesh for s in spaces}
    if mesh is not None:
        meshes.add(mesh)
    if len(meshes) != 1:
        raise ValueError("cannot determine a unique mesh for this form" if not meshes
                         else "form mixes functions on different meshes")
    (mesh,) = meshes
    degree = quadrature_degree
    if degree is None:
        degree = 2 * max((s.degree for s in spaces), default=0) + 1
    test_space = trial_space = None
    for a in args:
        if a.number == 0:
            test_space = a.space
        else:
            trial_space = a.space
    if test_space is None and trial_space is not None:
        raise ArityError("a form with a trial function must also have a test function")

    bindings = dict(coefficients or {})
    poly = _Evaluator(bindings, degree)(expr)

    if test_space is not None:
        t_tab = _tables(test_space, degree)
        weights = t_tab.weights
    else:
        weights = _tables(FunctionSpace(mesh, 1), degree).weights

    if len(args) == 0:
        total = 0.0
        for value in poly.values():
            total += float(np.sum(np.broadcast_to(value * weights, weights.shape)))
        return total
    if len(args) == 1:
        return _assemble_vector(poly, t_tab, weights)
    return _assemble_matrix(poly, t_tab, _tables(trial_space, degree), weights)


def _scaled(value, weights):
    return np.broadcast_to(value * weights, weights.shape)


def _assemble_vector(poly, tab, weights):
    space = tab.space
    out = np.zeros(space.dof_count)
    for (tkey, _), value in poly.items():
        comp, order = tkey
        cw = _scaled(value, weights)
        basis = tab.basis[order]
        local = np.zeros((tab.n_cells, basis.shape[1]))
        for q in range(tab.n_qp):
            local += cw[:, q, None] * basis[q][None, :]
        dofs = comp * space.n_nodes + space.cell_nodes
        out += np.bincount(dofs.ravel(), weights=local.ravel(), minlength=space.dof_count)
    return out


def _assemble_matrix(poly, t_tab, r_tab, weights):
    t_space, r_space = t_tab.space, r_tab.space
    blocks = {}
    for (tkey, rkey), value in poly.items():
        (ct, ot), (cr, orr) = tkey, rkey
        cw = _scaled(value, weights)
        bt, br = t_tab.basis[ot], r_tab.basis[orr]
        elem = np.zeros((t_tab.n_cells, bt.shape[1], br.shape[1]))
        for q in range(t_tab.n_qp):
            # the outer product is formed before scaling so that swapping test
            # and trial yields the exact transpose
            outer = bt[q][:, None] * br[q][None, :]
            elem += cw[:, q, None, None] * outer[None, :, :]
        block = (ct, cr)
        blocks[block] = blocks[block] + elem if block in blocks else elem

    n_rows, n_cols = t_space.dof_count, r_space.dof_count
    rows, cols, vals = [], [], []
    for (ct, cr), elem in blocks.items():
        r = ct * t_space.n_nodes + t_space.cell_nodes[:, :, None]
        c = cr * r_space.n_nodes + r_space.cell_nodes[:, None, :]
        r, c = np.broadcast_arrays(r, c)
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(elem.ravel())
    if not rows:
        return sp.csr_matrix((n_rows, n_cols))
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    keys, inverse = np.unique(rows * n_cols + cols, return_inverse=True)
    data = np.bincount(inverse.ravel(), weights=vals, minlength=len(keys))
    urows, ucols = np.divmod(keys, n_cols)
    indptr = np.concatenate([[0], np.cumsum(np.bincount(urows, minlength=n_rows))])
    return sp.csr_matrix((data, ucols, indptr), shape=(n_rows, n_cols))


@lru_cache(maxsize=32)
def _mass_matrix(space):
    u, v = F.TrialFunction(space), F.TestFunction(space)
    if space.components == 1:
        form = u * v
    else:
        form = u[0] * v[0]
        for i in range(1, space.components):
            form = form + u[i] * v[i]
    return assemble(form)


def mass_matrix(space):
    """Consistent mass matrix of ``space`` (block diagonal over components)."""
    return _mass_matrix(space).copy()


# -- boundary conditions -----------------------------------------------------


@dataclass(frozen=True)
class DirichletBC:
    """Strong Dirichlet condition ``u[component] = value`` on a boundary.

    ``value`` is a float or a callable of ``x``; it must not depend on the
    model input.
    """

    space: object
    value: object = 0.0
    boundary: str = "both"
    component: int = 0

    def __post_init__(self):
        if self.boundary not in ("left", "right", "both"):
            raise InvalidBC(f"boundary must be 'left', 'right' or 'both', got {self.boundary!r}")
        if self.space.mesh.periodic:
            raise InvalidBC("Dirichlet conditions cannot be applied on a periodic mesh")
        if not 0 <= self.component < self.space.components:
            raise InvalidBC(f"component {self.component} out of range")

    def nodes(self):
        last = self.space.n_nodes - 1
        return {"left": [0], "right": [last], "both": [0, last]}[self.boundary]

    def dofs(self):
        return np.array(self.nodes()) + self.component * self.space.n_nodes

    def boundary_values(self):
        x = self.space.node_coordinates[self.nodes()]
        v = self.value(x) if callable(self.value) else self.value
        return np.broadcast_to(np.asarray(v, dtype=float), x.shape).copy()

    def homogenize(self):
        return dc_replace(self, value=0.0)

    @property
    def is_homogeneous(self):
        return not callable(self.value) and float(self.value) == 0.0


def homogenize(bcs):
    return [bc.homogenize() for bc in bcs]


def apply_bc(A, b, bc, mode="full"):
    """Impose ``bc`` by row replacement.

    Rows of ``A`` at the boundary dofs become identity rows; ``b`` gets the
    boundary value (``mode="full"``) or zero (``mode="homogenised"``).
    Either of ``A`` and ``b`` may be ``None``. Returns new objects.
    """
    if mode not in ("full", "homogenised", "homogenized"):
        raise ValueError(f"unknown mode {mode!r}")
    if getattr(bc.space.mesh, "periodic", False):
        raise InvalidBC("Dirichlet conditions cannot be applied on a periodic mesh")
    dofs = bc.dofs()
    if A is not None:
        n = A.shape[0]
        if dofs.max() >= n:
            raise InvalidBC("boundary dof outside the system")
        mask = np.zeros(n)
        mask[dofs] = 1.0
        A = (sp.diags(1.0 - mask) @ sp.csr_matrix(A) + sp.diags(mask)).tocsr()
    if b is not None:
        b = np.array(b, dtype=float)
        b[dofs] = bc.boundary_values() if mode == "full" else 0.0
    return A, b


def apply_bcs(A, b, bcs, mode="full"):
    for bc in bcs:
        A, b = apply_bc(A, b, bc, mode)
    return A, b


def bc_dofs(bcs):
    if not bcs:
        return np.zeros(0, dtype=int)
    return np.unique(np.concatenate([bc.dofs() for bc in bcs]))
