"""Runtime tape of equation solves, and the sweeps derived from it.

A forward model is viewed as a sequence of equation solves. Each solve
``F_k(u_k, u_k1, ..., u_kN) = 0`` is recorded with its symbolic residual,
the versions of the previously computed values it depends on, its boundary
conditions and a snapshot of the solution. Because the residual is kept as
a form, the tangent linear equation

    dF_k/du_k  du_k' = - sum_i dF_k/du_ki  du_ki'

and its adjoint are obtained by symbolic differentiation of the recorded
residual, evaluated at the recorded states. Strong boundary conditions are
imposed in homogenised form on both.
"""

import hashlib
import threading
from dataclasses import dataclass, field

import numpy as np

from . import forms as F
from .assembly import apply_bcs, assemble, bc_dofs
from .exceptions import (
    DimensionMismatch, TapeNotSealed, TapeSealed, UnsupportedFunctional,
)
from .solvers import factorize, newton_solve

__all__ = [
    "Tape", "TapeRecord", "tlm_sweep", "adjoint_sweep", "functional_gradient",
    "functional_value",
]


@dataclass
class TapeRecord:
    """One recorded operation.

    ``kind`` is ``"input"`` (the control is written into ``unknown``),
    ``"assign"`` (``unknown`` is a copy of a previous value, or of one of its
    components) or ``"solve"`` (``unknown`` solves ``residual = 0``).
    ``dependencies`` pairs each symbol with the index of the record that
    produced the version used.
    """

    index: int
    kind: str
    unknown: F.Coefficient
    state: np.ndarray
    residual: F.FormExpr = None
    dependencies: tuple = ()
    bcs: tuple = ()
    parameters: dict = field(default_factory=dict)
    component: int = None
    solver_params: object = None

    @property
    def bc_dofs(self):
        return bc_dofs(self.bcs)

    def describe(self):
        deps = ", ".join(f"{sym.name}@{idx}" for sym, idx in self.dependencies)
        if self.kind == "input":
            return f"#{self.index:<4d} input   {self.unknown.name}"
        if self.kind == "assign":
            src = deps + (f"[{self.component}]" if self.component is not None else "")
            return f"#{self.index:<4d} assign  {self.unknown.name} <- {src}"
        bcs = "; ".join(f"{bc.boundary}[{bc.component}]" for bc in self.bcs) or "none"
        return (f"#{self.index:<4d} solve   {self.unknown.name}: {self.residual} = 0"
                f"  | deps: {deps or 'none'} | bcs: {bcs}")


@dataclass
class _Linearisation:
    factor: object
    dofs: np.ndarray
    couplings: list  # [(record index, matrix dF_k/du_dep)]


class Tape:
    """Ordered record of a forward run.

    Typical use::

        tape = Tape()
        tape.record_input(u_old, m)
        for step in range(n):
            newton_solve(F, u, bcs, tape=tape)
            tape.record_assign(u_old, u)
        tape.seal(output=u_old)
    """

    def __init__(self):
        self.records = []
        self.input_index = None
        self.output_index = None
        self._latest = {}
        self._sealed = False
        self._checksum = None
        self._linearised = {}
        self._derivatives = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self.records)

    @property
    def sealed(self):
        return self._sealed

    def _check_open(self):
        if self._sealed:
            raise TapeSealed("the tape is sealed; no further records can be added")

    def _append(self, **kwargs):
        state = np.array(kwargs.pop("state"), dtype=float)
        state.setflags(write=False)
        rec = TapeRecord(index=len(self.records), state=state, **kwargs)
        self.records.append(rec)
        self._latest[rec.unknown.id] = rec.index
        return rec

    def version(self, coefficient):
        """Index of the record holding the latest value of ``coefficient``."""
        return self._latest.get(coefficient.id)

    # -- recording ---------------------------------------------------------

    def record_input(self, coefficient, values=None):
        """Designate ``coefficient`` as the control and record its value."""
        self._check_open()
        if self.input_index is not None:
            raise ValueError("the tape already has an input")
        if values is not None:
            coefficient.values = values
        if coefficient.values is None:
            raise ValueError("the input coefficient has no values")
        rec = self._append(kind="input", unknown=coefficient, state=coefficient.values)
        self.input_index = rec.index
        return rec

    def record_assign(self, target, source, component=None):
        """Perform and record ``target = source`` (or ``source[component]``)."""
        self._check_open()
        values = source.values if component is None else source.component_values(component)
        target.values = values
        src = self.version(source)
        deps = ((source, src),) if src is not None else ()
        return self._append(kind="assign", unknown=target, state=values,
                            dependencies=deps, component=component)

    def record_solve(self, unknown, residual, dependencies=None, bcs=(), solver_params=None):
        """Record that ``unknown`` now solves ``residual = 0``.

        ``dependencies`` defaults to every coefficient of the residual that
        already has a version on the tape; the remaining coefficients are
        treated as fixed parameters and snapshotted.
        """
        self._check_open()
        symbols = [c for c in F.coefficients(residual) if c is not unknown]
        if dependencies is None:
            dependencies = [c for c in symbols if self.version(c) is not None]
        deps = []
        for c in dependencies:
            idx = self.version(c)
            if idx is None:
                raise ValueError(f"dependency {c.name} has not been computed on this tape")
            deps.append((c, idx))
        dep_ids = {c.id for c, _ in deps}
        params = {c: np.array(c.values) for c in symbols if c.id not in dep_ids}
        return self._append(kind="solve", unknown=unknown, state=unknown.values,
                            residual=residual, dependencies=tuple(deps), bcs=tuple(bcs),
                            parameters=params, solver_params=solver_params)

    def seal(self, output):
        """Fix the output variable and freeze the tape."""
        self._check_open()
        if self.input_index is None:
            raise ValueError("the tape has no input")
        idx = self.version(output)
        if idx is None:
            raise ValueError(f"{output.name} was never computed on this tape")
        self.output_index = idx
        self._sealed = True
        self._checksum = self.checksum()
        return self

    # -- inspection --------------------------------------------------------

    @property
    def input_record(self):
        return self.records[self.input_index]

    @property
    def output_record(self):
        return self.records[self.output_index]

    @property
    def input_space(self):
        return self.input_record.unknown.space

    @property
    def output_space(self):
        return self.output_record.unknown.space

    def checksum(self):
        digest = hashlib.sha256()
        for rec in self.records:
            digest.update(rec.state.tobytes())
        return digest.hexdigest()

    def verify_integrity(self):
        """True if no stored state changed since sealing."""
        return self._checksum is not None and self.checksum() == self._checksum

    def bindings(self, rec):
        """Coefficient values in force when ``rec`` was solved."""
        values = dict(rec.parameters)
        for sym, idx in rec.dependencies:
            values[sym] = self.records[idx].state
        values[rec.unknown] = rec.state
        return values

    def dump(self):
        """Human-readable listing of the records."""
        head = f"tape: {len(self.records)} records"
        if self.input_index is not None:
            head += f", input #{self.input_index} ({self.input_record.unknown.name})"
        if self.output_index is not None:
            head += f", output #{self.output_index} ({self.output_record.unknown.name})"
        return "\n".join([head] + [rec.describe() for rec in self.records])

    # -- re-execution ------------------------------------------------------

    def replay(self, m=None):
        """Re-execute the recorded equations, optionally from a new input.

        Returns the list of states, one per record. Coefficient values of the
        model are overwritten along the way.
        """
        states = []
        for rec in self.records:
            if rec.kind == "input":
                values = rec.state if (m is None or rec.index != self.input_index) else m
                rec.unknown.values = values
            elif rec.kind == "assign":
                (source, idx), = rec.dependencies or ((None, None),)
                values = rec.state if idx is None else states[idx]
                if rec.component is not None and idx is not None:
                    values = values[source.space.component_dofs(rec.component)]
                rec.unknown.values = values
            else:
                for sym, idx in rec.dependencies:
                    sym.values = states[idx]
                for sym, vals in rec.parameters.items():
                    sym.values = vals
                previous = [s for s in states[::-1] if s.shape == rec.state.shape]
                guess = rec.state if m is None else (previous[0] if previous else rec.state)
                rec.unknown.values = guess
                newton_solve(rec.residual, rec.unknown, rec.bcs, rec.solver_params)
            states.append(np.array(rec.unknown.values))
        return states

    # -- linearisation -----------------------------------------------------

    def _derivative(self, residual, wrt):
        key = (residual, wrt)
        form = self._derivatives.get(key)
        if form is None:
            form = F.gateaux_derivative(residual, wrt, F.TrialFunction(wrt.space))
            self._derivatives[key] = form
        return form

    def linearisation(self, k):
        """Factorised homogenised ``dF_k/du_k`` and the coupling matrices."""
        lin = self._linearised.get(k)
        if lin is not None:
            return lin
        with self._lock:
            lin = self._linearised.get(k)
            if lin is None:
                lin = self._linearise(self.records[k])
                self._linearised[k] = lin
        return lin

    def _linearise(self, rec):
        values = self.bindings(rec)
        A = assemble(self._derivative(rec.residual, rec.unknown), values)
        homogeneous = [bc.homogenize() for bc in rec.bcs]
        A, _ = apply_bcs(A, None, homogeneous, mode="homogenised")
        couplings = []
        for sym, idx in rec.dependencies:
            form = self._derivative(rec.residual, sym)
            if isinstance(form, F.Zero):
                continue
            couplings.append((idx, assemble(form, values).tocsr()))
        return _Linearisation(factorize(A), rec.bc_dofs, couplings)


def _require_sealed(tape):
    if not tape.sealed:
        raise TapeNotSealed("seal the tape before deriving tangent linear or adjoint models")


def _check_length(vec, n, what):
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (n,):
        raise DimensionMismatch(f"{what} must have shape ({n},), got {vec.shape}")
    return vec


def tlm_sweep(tape, dm):
    """Action of the propagator: solve the tangent linear equations forwards.

    Returns the tangent linear value of the output variable for the input
    perturbation ``dm``.
    """
    _require_sealed(tape)
    dm = _check_length(dm, tape.input_space.dof_count, "dm")
    start, stop = tape.input_index, tape.output_index
    tangent = {start: dm.copy()}
    for k in range(start + 1, stop + 1):
        rec = tape.records[k]
        if rec.kind == "assign":
            if rec.dependencies and rec.dependencies[0][1] in tangent:
                (source, idx), = rec.dependencies
                value = tangent[idx]
                if rec.component is not None:
                    value = value[source.space.component_dofs(rec.component)]
                tangent[k] = value.copy()
        elif rec.kind == "solve":
            lin = tape.linearisation(k)
            rhs = None
            for idx, B in lin.couplings:
                if idx in tangent:
                    contrib = B @ tangent[idx]
                    rhs = -contrib if rhs is None else rhs - contrib
            if rhs is None:
                continue
            rhs[lin.dofs] = 0.0
            tangent[k] = lin.factor.solve(rhs)
    out = tangent.get(stop)
    return out.copy() if out is not None else np.zeros(tape.output_space.dof_count)


def adjoint_sweep(tape, w):
    """Hermitian action of the propagator: solve the adjoint equations backwards.

    ``w`` is injected at the output record; the accumulated adjoint at the
    input record is returned.
    """
    _require_sealed(tape)
    w = _check_length(w, tape.output_space.dof_count, "w")
    start, stop = tape.input_index, tape.output_index
    adjoint = {stop: w.copy()}
    for k in range(stop, start, -1):
        if k not in adjoint:
            continue
        rec = tape.records[k]
        source = adjoint.pop(k)
        if rec.kind == "assign":
            if not rec.dependencies:
                continue
            (sym, idx), = rec.dependencies
            if idx < start:
                continue
            acc = adjoint.setdefault(idx, np.zeros(sym.space.dof_count))
            if rec.component is None:
                acc += source
            else:
                acc[sym.space.component_dofs(rec.component)] += source
        elif rec.kind == "solve":
            lin = tape.linearisation(k)
            rhs = source.copy()
            rhs[lin.dofs] = 0.0
            lam = lin.factor.solve(rhs, trans="T")
            lam[lin.dofs] = 0.0
            for idx, B in lin.couplings:
                if idx < start:
                    continue
                contrib = B.T @ lam
                if idx in adjoint:
                    adjoint[idx] -= contrib
                else:
                    adjoint[idx] = -contrib
    out = adjoint.get(start)
    return out if out is not None else np.zeros(tape.input_space.dof_count)


def _check_functional(tape, J):
    out = tape.output_record.unknown
    others = [c.name for c in F.coefficients(J) if c is not out]
    if others:
        raise UnsupportedFunctional(
            f"functional may only depend on the output {out.name}; also uses {others}")
    if F.arity(J) != 0:
        raise UnsupportedFunctional("functional must have arity 0")
    return out


def functional_value(tape, J):
    out = _check_functional(tape, J)
    return assemble(J, {out: tape.output_record.state}, mesh=out.space.mesh)


def functional_gradient(tape, J, mode="adjoint"):
    """Gradient of ``J(u_T)`` with respect to the input dofs.

    ``mode="adjoint"`` runs one adjoint sweep seeded with dJ/du_T;
    ``mode="tlm"`` builds the gradient one tangent linear sweep per input dof.
    """
    _require_sealed(tape)
    out = _check_functional(tape, J)
    dJ = assemble(F.gateaux_derivative(J, out, F.TestFunction(out.space)),
                  {out: tape.output_record.state})
    if mode == "adjoint":
        return adjoint_sweep(tape, dJ)
    if mode == "tlm":
        n = tape.input_space.dof_count
        grad = np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            grad[i] = dJ @ tlm_sweep(tape, e)
        return grad
    raise ValueError(f"mode must be 'tlm' or 'adjoint', got {mode!r}")
