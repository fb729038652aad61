"""Shared solver output types and first-order optimality measures."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .cost import DifferentiableCost, quadratize
from .dynamics import ControlAffineSystem, Trajectory, linearize_trajectory


class Termination(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    LINE_SEARCH_FAILURE = "line_search_failure"
    NUMERICAL_FAILURE = "numerical_failure"


class RolloutDivergence(RuntimeError):
    """A forward rollout produced a non-finite state."""


@dataclass
class SolverResult:
    """Outcome of a trajectory optimization solve.

    The trajectory is always dynamically feasible (re-rolled through the
    Euler dynamics); `stationarity_residual` is the max over stages of the
    infinity norm of the control gradient of the discrete Hamiltonian
    along it.  `trace` holds one small dict per iteration for diagnostics.
    """

    trajectory: Trajectory
    cost: float
    iterations: int
    termination: Termination
    stationarity_residual: float
    trace: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED


def costate_trajectory(
    sys: ControlAffineSystem, cost: DifferentiableCost, traj: Trajectory
) -> np.ndarray:
    """Adjoint sweep lam_N = phi_x, lam_k = dt*l_x + A_k' lam_{k+1}; shape (N+1, n)."""
    A, _ = linearize_trajectory(sys, traj)
    quad = quadratize(cost, traj)
    N = traj.horizon
    lam = np.zeros((N + 1, traj.state_dim))
    lam[N] = quad.phi_x
    for k in reversed(range(N)):
        lam[k] = quad.l_x[k] + A[k].T @ lam[k + 1]
    return lam


def stationarity_residual(
    sys: ControlAffineSystem, cost: DifferentiableCost, traj: Trajectory
) -> float:
    """max_k || dt * dr/du(u_k) + B_k' lam_{k+1} ||_inf along the trajectory.

    This is the control gradient of the discrete Hamiltonian with the
    co-state reconstructed by the adjoint sweep; it vanishes exactly at
    first-order stationary points of the discretized problem.
    """
    _, B = linearize_trajectory(sys, traj)
    quad = quadratize(cost, traj)
    lam = costate_trajectory(sys, cost, traj)
    worst = 0.0
    for k in range(traj.horizon):
        grad = quad.r_u[k] + B[k].T @ lam[k + 1]
        worst = max(worst, float(np.abs(grad).max()))
    return worst
