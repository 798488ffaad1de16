"""Automated tangent linear and adjoint models for finite element timestepping,
and generalised stability analysis of the resulting propagators."""

__version__ = "0.1.0"

from .assembly import DirichletBC, apply_bc, apply_bcs, assemble, mass_matrix
from .eigensolver import LanczosParams, SingularTriplet, compute_gst, lanczos_thick_restart
from .exceptions import *  # noqa: F401,F403
from .forms import (
    Coefficient, Constant, TestFunction, TrialFunction, adjoint_form, gateaux_derivative,
    replace,
)
from .mesh import FunctionSpace, IntervalMesh
from .models import (
    GstResult, ModelSpec, build_model, burgers_model, cahn_hilliard_model,
    gross_pitaevskii_model, heat_model, scalar_ode_model,
)
from .propagator import LinearOperator, gst_operator, propagator_from_tape
from .solvers import NewtonParams, newton_solve, solve_linear
from .tape import Tape, adjoint_sweep, functional_gradient, tlm_sweep
from .verification import dense_oracle_check, nonlinear_growth_check, taylor_test
from .estimator import GSTAnalysis
