"""Optimal control of advection-diffusion equations with SUPG-stabilized
finite elements.

The package solves the tracking problem

    min 1/2 ||y - yhat||^2 + omega/2 ||u||^2
    s.t.  -eps Lap y + c.grad y + r y = f + u,

discretized with continuous P1 or P2 elements plus streamline-upwind
Petrov-Galerkin stabilization, under both orderings of discretization
and optimization:

* ``dto``: discretize the objective and state equation first, then form
  the (symmetric) optimality system of the finite-dimensional problem.
* ``otd``: derive the continuous optimality system first, then apply
  the stabilized discretization to the state and adjoint equations
  separately.

The two routes differ by stabilization terms and the difference shows
up in the accuracy of the discrete adjoint; `analysis.run_study`
measures it.  The `cli` module exposes the studies as a command-line
tool.
"""

from .analysis import ErrorReport, oscillation_count, run_study
from .assembly import StabilizationConfig
from .kkt import DTO, OTD, apply_boundary_conditions, build_dto, build_otd
from .problem import EXAMPLES, example1, example2, example3
from .solver import SolverError, solve_direct, solve_reduced_oracle

__all__ = [
    "DTO", "OTD", "EXAMPLES", "ErrorReport", "SolverError",
    "StabilizationConfig", "apply_boundary_conditions", "build_dto",
    "build_otd", "example1", "example2", "example3",
    "oscillation_count", "run_study", "solve_direct",
    "solve_reduced_oracle",
]
