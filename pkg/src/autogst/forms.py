"""A small language of variational forms.

An integrand is an immutable expression tree over test/trial functions,
coefficients and constants; integration over the whole mesh is implicit.
The number of distinct arguments (test, trial) it contains is its arity:
2 for a bilinear form, 1 for a linear form, 0 for a functional.

Symbolic operations provided here:

* :func:`gateaux_derivative` -- linearisation with respect to a coefficient,
* :func:`adjoint_form` -- exchange of test and trial functions,
* :func:`replace` -- structural substitution of coefficients,
* :func:`expand_derivatives` -- push spatial derivatives onto terminals.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import ArityError, ShapeError, SpaceMismatch

__all__ = [
    "FormExpr", "Argument", "TestFunction", "TrialFunction", "Coefficient",
    "Constant", "Zero", "Sum", "Product", "Quotient", "Power", "Negation",
    "Dx", "Component", "split", "arguments", "arity", "coefficients",
    "gateaux_derivative", "adjoint_form", "replace", "expand_derivatives",
    "as_form",
]


def as_form(value):
    if isinstance(value, FormExpr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Constant(float(value))
    raise TypeError(f"cannot use {type(value).__name__} in a form")


class FormExpr:
    """Base class of expression nodes; supplies the arithmetic operators."""

    __array_ufunc__ = None  # keep numpy scalars from swallowing the operator

    operands = ()

    def __add__(self, other):
        return Sum(self, as_form(other))

    def __radd__(self, other):
        return Sum(as_form(other), self)

    def __sub__(self, other):
        return Sum(self, Negation(as_form(other)))

    def __rsub__(self, other):
        return Sum(as_form(other), Negation(self))

    def __mul__(self, other):
        return Product(self, as_form(other))

    def __rmul__(self, other):
        return Product(as_form(other), self)

    def __truediv__(self, other):
        return Quotient(self, as_form(other))

    def __rtruediv__(self, other):
        return Quotient(as_form(other), self)

    def __pow__(self, exponent):
        if int(exponent) != exponent:
            raise TypeError("only integer powers are supported")
        return Power(self, int(exponent))

    def __neg__(self):
        return Negation(self)

    def __getitem__(self, index):
        return Component(self, index)

    def dx(self):
        return Dx(self)

    def reconstruct(self, *operands):
        return self


# -- terminals ---------------------------------------------------------------


@dataclass(frozen=True)
class Argument(FormExpr):
    """Test (``number == 0``) or trial (``number == 1``) function."""

    space: object
    number: int

    def __str__(self):
        return "v_test" if self.number == 0 else "v_trial"

    __repr__ = __str__


def TestFunction(space):
    return Argument(space, 0)


def TrialFunction(space):
    return Argument(space, 1)


class Coefficient(FormExpr):
    """A finite element function: a symbol plus (optionally) a dof vector.

    Coefficients compare by identity, so two coefficients with equal values
    are still different symbols.
    """

    _ids = itertools.count()

    def __init__(self, space, values=None, name=None):
        self.space = space
        self.id = next(Coefficient._ids)
        self.name = name if name is not None else f"w{self.id}"
        self._values = None
        if values is not None:
            self.values = values

    @property
    def values(self):
        return self._values

    @values.setter
    def values(self, values):
        values = np.array(values, dtype=float)
        if values.shape != (self.space.dof_count,):
            raise ShapeError(
                f"{self.name}: expected {self.space.dof_count} dofs, got shape {values.shape}")
        self._values = values

    def component_values(self, i):
        return self._values[self.space.component_dofs(i)]

    def __str__(self):
        return self.name

    def __repr__(self):
        return f"Coefficient({self.name!r}, {self.space!r})"


@dataclass(frozen=True)
class Constant(FormExpr):
    value: float
    name: str = None

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))

    def __str__(self):
        return self.name if self.name else repr(self.value)


@dataclass(frozen=True)
class Zero(FormExpr):
    """The zero form; remembers the arguments the form would have carried."""

    arguments: frozenset = frozenset()

    def __str__(self):
        return "0"


# -- operators ---------------------------------------------------------------


@dataclass(frozen=True)
class Sum(FormExpr):
    left: FormExpr
    right: FormExpr

    @property
    def operands(self):
        return (self.left, self.right)

    def reconstruct(self, left, right):
        return Sum(left, right)

    def __str__(self):
        return f"{self.left} + {self.right}"


@dataclass(frozen=True)
class Product(FormExpr):
    left: FormExpr
    right: FormExpr

    @property
    def operands(self):
        return (self.left, self.right)

    def reconstruct(self, left, right):
        return Product(left, right)

    def __str__(self):
        return f"{_paren(self.left, Sum)}*{_paren(self.right, Sum)}"


@dataclass(frozen=True)
class Quotient(FormExpr):
    numerator: FormExpr
    denominator: FormExpr

    @property
    def operands(self):
        return (self.numerator, self.denominator)

    def reconstruct(self, numerator, denominator):
        return Quotient(numerator, denominator)

    def __str__(self):
        return f"{_paren(self.numerator, Sum)}/{_paren(self.denominator, (Sum, Product, Quotient))}"


@dataclass(frozen=True)
class Power(FormExpr):
    base: FormExpr
    exponent: int

    @property
    def operands(self):
        return (self.base,)

    def reconstruct(self, base):
        return Power(base, self.exponent)

    def __str__(self):
        return f"{_paren(self.base, (Sum, Product, Quotient, Negation))}^{self.exponent}"


@dataclass(frozen=True)
class Negation(FormExpr):
    operand: FormExpr

    @property
    def operands(self):
        return (self.operand,)

    def reconstruct(self, operand):
        return Negation(operand)

    def __str__(self):
        return f"-{_paren(self.operand, (Sum,))}"


@dataclass(frozen=True)
class Dx(FormExpr):
    """Derivative with respect to the spatial coordinate."""

    operand: FormExpr

    @property
    def operands(self):
        return (self.operand,)

    def reconstruct(self, operand):
        return Dx(operand)

    def __str__(self):
        return f"Dx({self.operand})"


@dataclass(frozen=True)
class Component(FormExpr):
    operand: FormExpr
    index: int

    @property
    def operands(self):
        return (self.operand,)

    def reconstruct(self, operand):
        return Component(operand, self.index)

    def __str__(self):
        return f"{self.operand}[{self.index}]"


def _paren(expr, kinds):
    return f"({expr})" if isinstance(expr, kinds) else str(expr)


def split(expr):
    """Component views of a multi-component function or argument."""
    return tuple(Component(expr, i) for i in range(expr.space.components))


TERMINALS = (Argument, Coefficient, Constant, Zero)


# -- traversal ---------------------------------------------------------------


def _map(expr, fn):
    """Rebuild ``expr`` bottom-up, applying ``fn`` to every terminal."""
    if isinstance(expr, TERMINALS):
        return fn(expr)
    return expr.reconstruct(*(_map(op, fn) for op in expr.operands))


def _walk(expr):
    yield expr
    for op in expr.operands:
        yield from _walk(op)


def coefficients(expr):
    """Coefficients of ``expr`` in order of first appearance."""
    seen = {}
    for node in _walk(expr):
        if isinstance(node, Coefficient):
            seen.setdefault(node.id, node)
    return list(seen.values())


def arguments(expr):
    """The set of arguments of ``expr``, checking that it is multilinear."""
    if isinstance(expr, Argument):
        return frozenset([expr])
    if isinstance(expr, Zero):
        return expr.arguments
    if isinstance(expr, (Coefficient, Constant)):
        return frozenset()
    if isinstance(expr, Sum):
        a, b = arguments(expr.left), arguments(expr.right)
        if a != b:
            raise ArityError(f"sum mixes terms with arguments {_fmt(a)} and {_fmt(b)}")
        return a
    if isinstance(expr, Product):
        a, b = arguments(expr.left), arguments(expr.right)
        if {x.number for x in a} & {x.number for x in b}:
            raise ArityError(f"product repeats an argument: {expr}")
        return a | b
    if isinstance(expr, Quotient):
        if arguments(expr.denominator):
            raise ArityError(f"argument in denominator: {expr}")
        return arguments(expr.numerator)
    if isinstance(expr, Power):
        a = arguments(expr.base)
        if a and expr.exponent != 1:
            raise ArityError(f"argument raised to power {expr.exponent}: {expr}")
        return a
    return arguments(expr.operands[0])


def _fmt(args):
    return "{" + ", ".join(sorted("test" if a.number == 0 else "trial" for a in args)) + "}"


def arity(expr):
    return len(arguments(expr))


def argument_spaces(expr):
    """``(test_space, trial_space)``; ``None`` where the argument is absent."""
    spaces = [None, None]
    for a in arguments(expr):
        spaces[a.number] = a.space
    return tuple(spaces)


def _terminal_arguments(expr):
    # unvalidated union, used while building simplified trees
    if isinstance(expr, Argument):
        return frozenset([expr])
    if isinstance(expr, Zero):
        return expr.arguments
    out = frozenset()
    for op in expr.operands:
        out |= _terminal_arguments(op)
    return out


# -- simplifying constructors ------------------------------------------------


def _is_const(expr, value):
    return isinstance(expr, Constant) and expr.value == value


def _add(a, b):
    if isinstance(a, Zero) and isinstance(b, Zero):
        return Zero(a.arguments | b.arguments)
    if isinstance(a, Zero):
        return b
    if isinstance(b, Zero):
        return a
    return Sum(a, b)


def _mul(a, b):
    if isinstance(a, Zero) or isinstance(b, Zero) or _is_const(a, 0.0) or _is_const(b, 0.0):
        return Zero(_terminal_arguments(a) | _terminal_arguments(b))
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Product(a, b)


def _neg(a):
    return a if isinstance(a, Zero) else Negation(a)


def _div(a, b):
    if isinstance(a, Zero):
        return a
    return Quotient(a, b)


def _pow(base, n):
    if n == 0:
        return Constant(1.0)
    if n == 1:
        return base
    return Power(base, n)


def _dx(a):
    return a if isinstance(a, Zero) else Dx(a)


def _component(a, i):
    return a if isinstance(a, Zero) else Component(a, i)


# -- differentiation ---------------------------------------------------------


def gateaux_derivative(form, wrt, direction):
    """Linearise ``form`` about ``wrt`` in the direction ``direction``.

    ``direction`` is an :class:`Argument` (usually a trial function, giving a
    Jacobian) or a :class:`Coefficient`; it must live in ``wrt``'s space. If
    ``wrt`` does not occur, the result is a :class:`Zero` carrying the
    arguments the derivative would have had.
    """
    if not isinstance(wrt, Coefficient):
        raise TypeError("can only differentiate with respect to a Coefficient")
    if not isinstance(direction, (Argument, Coefficient)):
        raise TypeError("direction must be an Argument or a Coefficient")
    if direction.space != wrt.space:
        raise SpaceMismatch(f"direction space {direction.space} differs from {wrt.space}")
    extra = frozenset([direction]) if isinstance(direction, Argument) else frozenset()

    def d(e):
        if e is wrt:
            return direction
        if isinstance(e, TERMINALS):
            return Zero(_terminal_arguments(e) | extra)
        if isinstance(e, Sum):
            return _add(d(e.left), d(e.right))
        if isinstance(e, Product):
            return _add(_mul(d(e.left), e.right), _mul(e.left, d(e.right)))
        if isinstance(e, Quotient):
            num, den = e.numerator, e.denominator
            dden = d(den)
            first = _div(d(num), den)
            if isinstance(dden, Zero):
                return _add(first, Zero(dden.arguments | _terminal_arguments(num)))
            return _add(first, _neg(_div(_mul(num, dden), _pow(den, 2))))
        if isinstance(e, Power):
            db = d(e.base)
            if isinstance(db, Zero):
                return Zero(db.arguments)
            return _mul(_mul(Constant(float(e.exponent)), _pow(e.base, e.exponent - 1)), db)
        if isinstance(e, Negation):
            return _neg(d(e.operand))
        if isinstance(e, Dx):
            return _dx(d(e.operand))
        if isinstance(e, Component):
            return _component(d(e.operand), e.index)
        raise TypeError(f"cannot differentiate {type(e).__name__}")

    return d(as_form(form))


def expand_derivatives(expr):
    """Rewrite so that :class:`Dx` only wraps terminals or components of them."""
    expr = as_form(expr)
    if isinstance(expr, TERMINALS):
        return expr
    if isinstance(expr, Dx):
        return _apply_dx(expand_derivatives(expr.operand))
    return expr.reconstruct(*(expand_derivatives(op) for op in expr.operands))


def _derivative_order(expr):
    n = 0
    while isinstance(expr, (Dx, Component)):
        n += isinstance(expr, Dx)
        expr = expr.operand
    return n, expr


def _apply_dx(e):
    if isinstance(e, Constant):
        return Zero()
    if isinstance(e, Zero):
        return e
    if isinstance(e, (Argument, Coefficient)):
        return Dx(e)
    if isinstance(e, (Dx, Component)):
        order, terminal = _derivative_order(e)
        if isinstance(terminal, Constant):
            return Zero()
        if order >= 2:
            # at most quadratic elements: third derivatives vanish cellwise
            return Zero(_terminal_arguments(e))
        return Dx(e)
    if isinstance(e, Sum):
        return _add(_apply_dx(e.left), _apply_dx(e.right))
    if isinstance(e, Negation):
        return _neg(_apply_dx(e.operand))
    if isinstance(e, Product):
        return _add(_mul(_apply_dx(e.left), e.right), _mul(e.left, _apply_dx(e.right)))
    if isinstance(e, Quotient):
        num, den = e.numerator, e.denominator
        return _add(_div(_apply_dx(num), den),
                    _neg(_div(_mul(num, _apply_dx(den)), _pow(den, 2))))
    if isinstance(e, Power):
        return _mul(_mul(Constant(float(e.exponent)), _pow(e.base, e.exponent - 1)),
                    _apply_dx(e.base))
    raise TypeError(f"cannot differentiate {type(e).__name__}")


# -- adjoint and substitution ------------------------------------------------


def adjoint_form(bilinear):
    """Exchange test and trial functions of a bilinear form."""
    bilinear = as_form(bilinear)
    if arity(bilinear) != 2:
        raise ArityError(f"adjoint_form needs a bilinear form, got arity {arity(bilinear)}")

    def swap(t):
        if isinstance(t, Argument):
            return Argument(t.space, 1 - t.number)
        if isinstance(t, Zero):
            return Zero(frozenset(Argument(a.space, 1 - a.number) for a in t.arguments))
        return t

    return _map(bilinear, swap)


def replace(form, mapping):
    """Substitute coefficients structurally; unmapped symbols are untouched."""
    for old, new in mapping.items():
        if not isinstance(old, Coefficient):
            raise TypeError("only coefficients can be replaced")
        if getattr(new, "space", None) != old.space:
            raise SpaceMismatch(f"cannot replace {old} by {new}: spaces differ")

    def sub(t):
        return mapping.get(t, t) if isinstance(t, Coefficient) else t

    return _map(as_form(form), sub)
