"""octrl: trajectory optimization for control-affine systems.

Indirect (iterative LQR) and direct (full-space SQP) solvers for
Euler-discretized optimal control with convex control cost, a scalar
characteristics/TPBVP toolbox, and a multi-start experiment harness that
measures how the time discretization changes the set of local minima.
"""

from . import characteristics, cli, cost, dynamics, experiments, ilqr, results, sqp
from .cost import QuadraticCost, quadratize, total_cost
from .dynamics import (
    CartpoleModel,
    ControlAffineSystem,
    LinearSystem,
    PendulumModel,
    Trajectory,
    continuous_derivative,
    dynamics_defects,
    euler_step,
    linearize_discrete,
    rollout,
)
from .experiments import (
    ExperimentConfig,
    SolutionClusterSet,
    cluster_solutions,
    cross_check,
    measure_scaling,
    run_multistart,
)
from .ilqr import ILQRSettings
from .results import SolverResult, Termination, stationarity_residual
from .sqp import SQPSettings

__all__ = [
    "CartpoleModel",
    "ControlAffineSystem",
    "ExperimentConfig",
    "ILQRSettings",
    "LinearSystem",
    "PendulumModel",
    "QuadraticCost",
    "SQPSettings",
    "SolutionClusterSet",
    "SolverResult",
    "Termination",
    "Trajectory",
    "characteristics",
    "cli",
    "cluster_solutions",
    "continuous_derivative",
    "cost",
    "cross_check",
    "dynamics",
    "dynamics_defects",
    "euler_step",
    "experiments",
    "ilqr",
    "linearize_discrete",
    "measure_scaling",
    "quadratize",
    "results",
    "rollout",
    "run_multistart",
    "sqp",
    "stationarity_residual",
    "total_cost",
]

__version__ = "0.1.0"
