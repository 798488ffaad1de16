"""Bundled time-dependent models and the ModelSpec abstraction.

A model advances a state ``u_old`` by solving one nonlinear variational
problem per timestep for ``u`` and then copying ``u`` (or one of its
components) back into ``u_old``. The control is the initial value of
``u_old`` and the output its final value, so input and output live in the
same space.
"""

import inspect
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import forms as F
from .assembly import DirichletBC, assemble
from .exceptions import ConfigError, UnknownModel
from .mesh import FunctionSpace, IntervalMesh
from .solvers import NewtonParams, newton_solve
from .tape import Tape

__all__ = [
    "ModelSpec", "GstResult", "burgers_model", "heat_model", "scalar_ode_model",
    "gross_pitaevskii_model", "cahn_hilliard_model", "MODELS", "build_model",
    "soliton", "soliton_amplitude_direction",
]


@dataclass
class _Problem:
    state: F.Coefficient
    unknown: F.Coefficient
    residual: F.FormExpr
    bcs: tuple


@dataclass
class ModelSpec:
    """A forward model: spaces, parameters, timestepping and residual.

    Parameters
    ----------
    name : str
    space : FunctionSpace
        Space of the per-step unknown.
    parameters : dict
        Physical parameters, passed to ``residual_builder``.
    dt : float
    n_steps : int
    initial_condition : callable or list of callables
        ``x -> values``, one per component of the state space.
    residual_builder : callable
        ``(unknown, state, test, parameters, dt) -> FormExpr``.
    bc_builder : callable, optional
        ``space -> [DirichletBC]``.
    state_space : FunctionSpace, optional
        Space of the input/output state; defaults to ``space``. When it
        differs, ``state_component`` selects the component copied back.
    taylor_h0 : float
        Largest step of the Taylor test; small enough that the first-order
        term dominates the remainder for a random direction.
    """

    name: str
    space: FunctionSpace
    parameters: dict
    dt: float
    n_steps: int
    initial_condition: object
    residual_builder: Callable
    bc_builder: Callable = None
    state_space: FunctionSpace = None
    state_component: int = None
    newton: NewtonParams = field(default_factory=NewtonParams)
    taylor_h0: float = 1e-3
    _problem: _Problem = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("must be positive", key="dt")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ConfigError("must be a non-negative integer", key="n_steps")
        self.n_steps = int(self.n_steps)
        if self.state_space is None:
            self.state_space = self.space
        if (self.state_space is not self.space) != (self.state_component is not None):
            raise ValueError("state_component must be given exactly when the state space differs")

    @property
    def T(self):
        return self.n_steps * self.dt

    @property
    def mesh(self):
        return self.space.mesh

    @property
    def input_space(self):
        return self.state_space

    @property
    def output_space(self):
        return self.state_space

    @property
    def dof_count(self):
        return self.state_space.dof_count

    def with_steps(self, n_steps):
        """Same model integrated for a different number of steps."""
        return replace(self, n_steps=n_steps, _problem=None)

    def initial_state(self):
        return self.state_space.interpolate(self.initial_condition)

    @property
    def problem(self):
        if self._problem is None:
            state = F.Coefficient(self.state_space, name="u_old")
            unknown = F.Coefficient(self.space, name="u")
            residual = self.residual_builder(unknown, state, F.TestFunction(self.space),
                                             self.parameters, self.dt)
            bcs = tuple(self.bc_builder(self.space)) if self.bc_builder else ()
            self._problem = _Problem(state, unknown, residual, bcs)
        return self._problem

    @property
    def output(self):
        """Symbol holding the output state, for building functionals."""
        return self.problem.state

    def _initial_guess(self, state):
        if self.state_component is None:
            return state.copy()
        guess = np.zeros(self.space.dof_count)
        guess[self.space.component_dofs(self.state_component)] = state
        return guess

    def forward(self, m=None, tape=None, callback=None, n_steps=None):
        """Integrate from ``m`` (default: the initial condition).

        ``callback(step, state)`` is called after every step, and once with
        step 0. Returns the final state.
        """
        prob = self.problem
        m = self.initial_state() if m is None else np.asarray(m, dtype=float)
        if m.shape != (self.state_space.dof_count,):
            raise ValueError(f"initial state must have {self.state_space.dof_count} dofs, got {m.shape}")
        n_steps = self.n_steps if n_steps is None else n_steps
        if tape is not None:
            tape.record_input(prob.state, m)
        else:
            prob.state.values = m
        prob.unknown.values = self._initial_guess(prob.state.values)
        if callback is not None:
            callback(0, prob.state.values.copy())
        for step in range(1, n_steps + 1):
            newton_solve(prob.residual, prob.unknown, prob.bcs, self.newton, tape=tape)
            if tape is not None:
                tape.record_assign(prob.state, prob.unknown, self.state_component)
            elif self.state_component is None:
                prob.state.values = prob.unknown.values
            else:
                prob.state.values = prob.unknown.component_values(self.state_component)
            if callback is not None:
                callback(step, prob.state.values.copy())
        return prob.state.values.copy()

    def trajectory(self, m=None, n_steps=None):
        """States at steps ``0 .. n_steps``, stacked as rows."""
        states = []
        self.forward(m, callback=lambda step, u: states.append(u), n_steps=n_steps)
        return np.array(states)

    def build_tape(self, m=None):
        """Run forward while recording, and return the sealed tape."""
        tape = Tape()
        self.forward(m, tape=tape)
        return tape.seal(self.problem.state)

    def default_functional(self):
        """``J(u_T) = integral of |u_T|^2`` summed over components."""
        u = self.output
        comps = self.state_space.components
        if comps == 1:
            return u * u
        form = u[0] * u[0]
        for i in range(1, comps):
            form = form + u[i] * u[i]
        return form

    def functional(self, J=None, m=None):
        """``J`` evaluated at the final state of a run from ``m``."""
        J = self.default_functional() if J is None else J
        final = self.forward(m)
        return assemble(J, {self.output: final}, mesh=self.mesh)


@dataclass
class GstResult:
    """Singular triplets of one model plus provenance."""

    model: str
    T: float
    triplets: list
    provenance: dict
    growth_curve: np.ndarray = None

    def __post_init__(self):
        sigmas = [t.sigma for t in self.triplets]
        if any(a < b for a, b in zip(sigmas, sigmas[1:])):
            raise ValueError("triplets must be sorted by decreasing sigma")
        if not self.provenance:
            raise ValueError("provenance must not be empty")

    @property
    def sigmas(self):
        return np.array([t.sigma for t in self.triplets])


def _positive(name, value):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", key=name) from None
    if not value > 0 or not np.isfinite(value):
        raise ConfigError(f"must be positive, got {value}", key=name)
    return value


def _count(name, value, minimum=1):
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ConfigError(f"must be an integer >= {minimum}, got {value!r}", key=name)
    return int(value)


def _element(value):
    try:
        FunctionSpace(IntervalMesh(0.0, 1.0, 1), value)
    except ValueError as exc:
        raise ConfigError(str(exc), key="element") from None
    return value


# -- Burgers -----------------------------------------------------------------


def _burgers_residual(u, u_old, v, p, dt):
    nu = F.Constant(p["nu"], "nu")
    if p["scheme"] == "trapezoidal":
        us = 0.5 * (u + u_old)
    else:
        us = u
    return (u - u_old) / dt * v + us * us.dx() * v + nu * us.dx() * v.dx()


def burgers_model(nu=1e-4, n_cells=30, dt=1.0 / 30.0, n_steps=6, element="P2",
                  scheme="implicit_euler", newton=None):
    """Viscous Burgers equation on [0, 1] with homogeneous Dirichlet ends.

    The initial condition is ``sin(2 pi x)``. ``scheme`` is
    ``"implicit_euler"`` or ``"trapezoidal"``.
    """
    nu = _positive("nu", nu)
    if scheme not in ("implicit_euler", "trapezoidal"):
        raise ConfigError(f"unknown scheme {scheme!r}", key="scheme")
    space = FunctionSpace(IntervalMesh(0.0, 1.0, _count("n_cells", n_cells)), _element(element))
    return ModelSpec(
        name="burgers", space=space, parameters={"nu": nu, "scheme": scheme},
        dt=_positive("dt", dt), n_steps=_count("n_steps", n_steps, 0),
        initial_condition=lambda x: np.sin(2 * np.pi * x),
        residual_builder=_burgers_residual,
        bc_builder=lambda V: [DirichletBC(V, 0.0)],
        newton=newton or NewtonParams(rel_tol=1e-13, abs_tol=1e-14),
    )


# -- heat ----------------------------------------------------------------------


def _heat_residual(u, u_old, v, p, dt):
    return (u - u_old) / dt * v + F.Constant(p["kappa"], "kappa") * u.dx() * v.dx()


def heat_model(kappa=1.0, n_cells=20, dt=0.001, n_steps=5, element="P1"):
    """Linear heat equation on [0, 1], implicit Euler, ``u = 0`` at both ends."""
    space = FunctionSpace(IntervalMesh(0.0, 1.0, _count("n_cells", n_cells)), _element(element))
    return ModelSpec(
        name="heat", space=space, parameters={"kappa": _positive("kappa", kappa)},
        dt=_positive("dt", dt), n_steps=_count("n_steps", n_steps, 0),
        initial_condition=lambda x: np.sin(np.pi * x) + 0.5 * np.sin(3 * np.pi * x),
        residual_builder=_heat_residual,
        bc_builder=lambda V: [DirichletBC(V, 0.0)],
    )


# -- scalar ODE ----------------------------------------------------------------


def _ode_residual(u, u_old, v, p, dt):
    return ((u - u_old) / dt - F.Constant(p["a"], "a") * u) * v


def scalar_ode_model(a=-1.0, dt=0.1, n_steps=5):
    """``du/dt = a u`` on a single P1 cell; the propagator is ``(1 - a dt)^-n I``."""
    try:
        a = float(a)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {a!r}", key="a") from None
    dt = _positive("dt", dt)
    if abs(1.0 - a * dt) < 1e-12:
        raise ConfigError("1 - a*dt must be nonzero", key="dt")
    space = FunctionSpace(IntervalMesh(0.0, 1.0, 1), 1)
    return ModelSpec(
        name="scalar_ode", space=space, parameters={"a": a}, dt=dt,
        n_steps=_count("n_steps", n_steps, 0),
        initial_condition=lambda x: 1.0 + 0.0 * x,
        residual_builder=_ode_residual,
    )


# -- Gross-Pitaevskii ----------------------------------------------------------


def soliton(x, t=0.0, amplitude=1.0, velocity=1.0):
    """Travelling soliton of the focusing equation as (real, imaginary) parts."""
    a, c = amplitude, velocity
    envelope = np.sqrt(2.0) * a / np.cosh(a * (x - c * t))
    phase = 0.5 * c * x + (a * a - 0.25 * c * c) * t
    return envelope * np.cos(phase), envelope * np.sin(phase)


def _gp_residual(w, w_old, test, p, dt):
    s = F.Constant(p["s"], "s")
    pn, qn = w[0], w[1]
    po, qo = w_old[0], w_old[1]
    phi, chi = test[0], test[1]
    pm = 0.5 * (pn + po)
    qm = 0.5 * (qn + qo)
    density = pm * pm + qm * qm
    real = -(qn - qo) / dt * phi - pm.dx() * phi.dx() + s * density * pm * phi
    imag = (pn - po) / dt * chi - qm.dx() * chi.dx() + s * density * qm * chi
    return real + imag


def gross_pitaevskii_model(s=1, n_cells=480, dt=0.03125, n_steps=50, length=20.0):
    """Gross-Pitaevskii equation split into real and imaginary parts.

    Periodic interval ``[-length/2, length/2]``, P1 elements, implicit
    midpoint rule, soliton initial condition.
    """
    if s not in (1, -1):
        raise ConfigError(f"must be +1 or -1, got {s!r}", key="s")
    half = 0.5 * _positive("length", length)
    mesh = IntervalMesh(-half, half, _count("n_cells", n_cells), periodic=True)
    space = FunctionSpace(mesh, 1, components=2)
    return ModelSpec(
        name="gross_pitaevskii", space=space, parameters={"s": float(s)},
        dt=_positive("dt", dt), n_steps=_count("n_steps", n_steps, 0),
        initial_condition=[lambda x: soliton(x)[0], lambda x: soliton(x)[1]],
        residual_builder=_gp_residual,
        newton=NewtonParams(rel_tol=1e-12, abs_tol=1e-13),
    )


def soliton_amplitude_direction(space, da=1e-6):
    """Centred difference of the soliton family with respect to its amplitude."""
    x = space.node_coordinates
    plus = np.concatenate(soliton(x, amplitude=1.0 + da))
    minus = np.concatenate(soliton(x, amplitude=1.0 - da))
    return (plus - minus) / (2.0 * da)


# -- Cahn-Hilliard -------------------------------------------------------------


def _ch_residual(w, c_old, test, p, dt):
    lam = F.Constant(p["lmbda"], "lmbda")
    mobility = F.Constant(p["M"], "M")
    theta = p["theta"]
    c, mu = w[0], w[1]
    q, v = test[0], test[1]
    c_mid = theta * c + (1.0 - theta) * c_old
    # f(c) = 100 c^2 (1 - c)^2
    dfdc = 200.0 * (c_mid - 3.0 * c_mid * c_mid + 2.0 * c_mid * c_mid * c_mid)
    return ((c - c_old) / dt * q + mobility * mu.dx() * q.dx()
            + mu * v - dfdc * v - lam * c_mid.dx() * v.dx())


def cahn_hilliard_model(lmbda=1e-2, M=1.0, n_cells=200, dt=5e-6, n_steps=10, theta=0.5,
                        length=2.0):
    """Cahn-Hilliard equation in mixed (concentration, chemical potential) form.

    Domain ``[0, length]`` with zero-flux boundaries. The state is the
    concentration alone; the chemical potential is recomputed every step.
    """
    theta = float(theta)
    if not 0.0 <= theta <= 1.0:
        raise ConfigError(f"must lie in [0, 1], got {theta}", key="theta")
    mesh = IntervalMesh(0.0, _positive("length", length), _count("n_cells", n_cells))
    centre = 0.5 * length
    return ModelSpec(
        name="cahn_hilliard", space=FunctionSpace(mesh, 1, components=2),
        parameters={"lmbda": _positive("lmbda", lmbda), "M": _positive("M", M), "theta": theta},
        dt=_positive("dt", dt), n_steps=_count("n_steps", n_steps, 0),
        initial_condition=lambda x: np.exp(-30.0 * (x - centre) ** 2),
        residual_builder=_ch_residual,
        state_space=FunctionSpace(mesh, 1), state_component=0,
        newton=NewtonParams(rel_tol=1e-11, abs_tol=1e-11),
        # spinodal curvature swamps the linear term of J for larger steps
        taylor_h0=3e-5,
    )


MODELS = {
    "burgers": burgers_model,
    "heat": heat_model,
    "scalar_ode": scalar_ode_model,
    "gross_pitaevskii": gross_pitaevskii_model,
    "cahn_hilliard": cahn_hilliard_model,
}


def build_model(name, **params):
    """Instantiate a bundled model by name; unknown parameters are a ConfigError."""
    try:
        factory = MODELS[name]
    except KeyError:
        raise UnknownModel(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    accepted = inspect.signature(factory).parameters
    for key in params:
        if key not in accepted or key == "newton":
            raise ConfigError(f"not a parameter of model {name!r}", key=f"model.params.{key}")
    return factory(**params)
