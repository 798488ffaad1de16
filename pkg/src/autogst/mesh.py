"""Interval meshes, Lagrange function spaces and reference-element tables."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class IntervalMesh:
    """Uniform mesh of ``[a, b]`` with ``n_cells`` cells.

    On a periodic mesh the vertex at ``b`` is identified with the one at ``a``.
    """

    a: float
    b: float
    n_cells: int
    periodic: bool = False

    def __post_init__(self):
        if not self.n_cells >= 1 or int(self.n_cells) != self.n_cells:
            raise ValueError(f"n_cells must be a positive integer, got {self.n_cells}")
        if not self.b > self.a:
            raise ValueError(f"need b > a, got a={self.a}, b={self.b}")
        if self.periodic and self.n_cells < 2:
            raise ValueError("a periodic mesh needs at least two cells")

    @property
    def length(self):
        return self.b - self.a

    @property
    def h(self):
        return self.length / self.n_cells

    @cached_property
    def vertices(self):
        return np.linspace(self.a, self.b, self.n_cells + 1)


ELEMENTS = {"P1": 1, "P2": 2}


def _element_degree(element):
    if isinstance(element, str):
        try:
            return ELEMENTS[element.upper()]
        except KeyError:
            raise ValueError(f"unknown element {element!r}; expected one of {sorted(ELEMENTS)}")
    if element not in (1, 2):
        raise ValueError(f"element degree must be 1 or 2, got {element}")
    return int(element)


@dataclass(frozen=True)
class FunctionSpace:
    """Continuous Lagrange space, possibly with several components.

    Degrees of freedom are laid out in blocks: component ``c`` of node ``i``
    lives at ``c * n_nodes + i``.
    """

    mesh: IntervalMesh
    degree: int = 1
    components: int = 1

    def __init__(self, mesh, element=1, components=1):
        object.__setattr__(self, "mesh", mesh)
        object.__setattr__(self, "degree", _element_degree(element))
        if components < 1:
            raise ValueError("components must be positive")
        object.__setattr__(self, "components", int(components))

    def __repr__(self):
        return f"FunctionSpace(P{self.degree}, n_cells={self.mesh.n_cells}, components={self.components})"

    @property
    def element(self):
        return f"P{self.degree}"

    @property
    def n_nodes(self):
        n = self.degree * self.mesh.n_cells
        return n if self.mesh.periodic else n + 1

    @property
    def dof_count(self):
        return self.n_nodes * self.components

    @cached_property
    def node_coordinates(self):
        n = self.degree * self.mesh.n_cells
        x = np.linspace(self.mesh.a, self.mesh.b, n + 1)
        return x[:-1] if self.mesh.periodic else x

    @cached_property
    def cell_nodes(self):
        """``(n_cells, degree + 1)`` global node numbers, left to right."""
        p = self.degree
        local = np.arange(p + 1)
        nodes = p * np.arange(self.mesh.n_cells)[:, None] + local[None, :]
        return nodes % self.n_nodes if self.mesh.periodic else nodes

    def component_dofs(self, component):
        if not 0 <= component < self.components:
            raise IndexError(f"component {component} out of range for {self}")
        start = component * self.n_nodes
        return slice(start, start + self.n_nodes)

    def interpolate(self, func):
        """Nodal interpolant of ``func(x)``; a sequence gives one callable per component."""
        funcs = func if isinstance(func, (list, tuple)) else [func]
        if len(funcs) != self.components:
            raise ValueError(f"expected {self.components} component functions, got {len(funcs)}")
        x = self.node_coordinates
        return np.concatenate([np.broadcast_to(np.asarray(f(x), dtype=float), x.shape) for f in funcs])


def gauss_rule(degree):
    """Gauss-Legendre points and weights on [0, 1], exact to polynomial ``degree``."""
    n = degree // 2 + 1
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


def reference_basis(degree, xi, order=0):
    """Values (``order`` 0), first or second derivatives of the reference basis.

    Returns an array of shape ``(len(xi), degree + 1)`` with derivatives taken
    in the reference coordinate.
    """
    xi = np.asarray(xi, dtype=float)
    one = np.ones_like(xi)
    if degree == 1:
        table = {
            0: [1.0 - xi, xi],
            1: [-one, one],
            2: [0.0 * one, 0.0 * one],
        }
    elif degree == 2:
        table = {
            0: [2 * xi**2 - 3 * xi + 1, 4 * xi * (1 - xi), 2 * xi**2 - xi],
            1: [4 * xi - 3, 4 - 8 * xi, 4 * xi - 1],
            2: [4 * one, -8 * one, 4 * one],
        }
    else:
        raise ValueError(f"unsupported degree {degree}")
    if order not in table:
        raise ValueError(f"derivative order {order} not supported")
    return np.stack(table[order], axis=-1)


class CellTables:
    """Quadrature data and physical basis tables for one space on its mesh."""

    def __init__(self, space, quadrature_degree):
        mesh = space.mesh
        self.space = space
        xi, w = gauss_rule(quadrature_degree)
        h = mesh.h
        left = mesh.vertices[:-1]
        self.x = left[:, None] + h * xi[None, :]
        self.weights = np.broadcast_to(h * w, self.x.shape)
        self.n_cells = mesh.n_cells
        self.n_qp = len(xi)
        # derivative order -> (n_qp, n_local) table in physical coordinates
        self.basis = {d: reference_basis(space.degree, xi, d) / h**d for d in (0, 1, 2)}

    def evaluate(self, values, component, order):
        """Evaluate a dof vector (one component, given derivative order) at quadrature points."""
        nodal = values[self.space.component_dofs(component)][self.space.cell_nodes]
        return nodal @ self.basis[order].T
