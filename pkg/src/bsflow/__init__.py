"""Front-tracking finite elements for two-phase flow with a Boussinesq-Scriven surface fluid.

Two-dimensional P2-P1 Taylor-Hood bulk discretization (optionally
enriched by the inner-phase indicator), a polygonal interface carrying
surface mass and insoluble surfactant, and two fully discrete linear
schemes: ``"gd"`` (interface vertices transported with the fluid) and
``"bgn"`` (implicit curvature with tangential vertex redistribution).
"""

from ._threads import apply_thread_cap

apply_thread_cap()

from .assembly import BGN, GD
from .exact import ExpandingBubble, error_norms
from .interface import InterfacePolygon, make_circle, make_ellipse
from .mesh import Domain, GeometricError
from .params import EquationOfState, PhysicalParams
from .solver import SolverError
from .stepper import SimulationState, StepSettings, diagnostics, initial_state, step

__all__ = [
    "BGN",
    "GD",
    "Domain",
    "EquationOfState",
    "ExpandingBubble",
    "GeometricError",
    "InterfacePolygon",
    "PhysicalParams",
    "SimulationState",
    "SolverError",
    "StepSettings",
    "diagnostics",
    "error_norms",
    "initial_state",
    "make_circle",
    "make_ellipse",
    "step",
]

__version__ = "0.1.0"
