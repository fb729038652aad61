"""Iterative LQR: backward co-state recursion, feedback rollout, line search.

Each iteration linearizes the Euler dynamics and quadratizes the cost around
the current rollout, sweeps the gain recursion backward, and rolls the
feedback law forward with a backtracking step on the feedforward term.
Per-iteration work is linear in the horizon N.

Backward recursion, with (v, V) the gradient/Hessian of the cost-to-go of
the local LQ model and terminal conditions v_N = phi_x, V_N = phi_xx:

    Quu_k = r_uu + B_k' V_{k+1} B_k            (+ regularization)
    k_k   = Quu_k^{-1} (r_u + B_k' v_{k+1})
    K_k   = Quu_k^{-1} B_k' V_{k+1} A_k
    v_k   = l_x + A_k' (v_{k+1} - V_{k+1} B_k k_k)
    V_k   = l_xx + A_k' (V_{k+1} - V_{k+1} B_k Quu_k^{-1} B_k' V_{k+1}) A_k

The V update is the Riccati-difference form; it is algebraically identical
(by the matrix inversion lemma) to the inverse form
(V_{k+1}^{-1} + B r_uu^{-1} B')^{-1} whenever V_{k+1} is invertible, but
stays well defined for singular V.  The control update is
u_k <- u_k - alpha*k_k - K_k (x - x_k).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cost import CostQuadratization, DifferentiableCost, quadratize, total_cost
from .dynamics import ControlAffineSystem, Trajectory, euler_step, linearize_trajectory, rollout
from .results import RolloutDivergence, SolverResult, Termination

_STATE_NORM_LIMIT = 1e8


@dataclass(frozen=True)
class ILQRSettings:
    max_iterations: int = 500
    convergence_tol: float = 1e-8  # on relative cost decrease
    stationarity_tol: float = 1e-4  # on max |dH/du| along the rollout
    regularization_init: float = 0.0
    regularization_max: float = 1e8
    line_search_backtrack: float = 0.5
    line_search_min_step: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.line_search_backtrack < 1.0:
            raise ValueError("line_search_backtrack must be in (0, 1)")
        if min(self.max_iterations, self.convergence_tol, self.stationarity_tol,
               self.regularization_max, self.line_search_min_step) <= 0:
            raise ValueError("settings must be positive")
        if self.regularization_init < 0:
            raise ValueError("regularization_init must be >= 0")


class BackwardPassFailure(RuntimeError):
    """The regularized control Hessian was not positive definite."""


@dataclass
class BackwardPassResult:
    """Gains and co-state parameters from one backward sweep.

    k: (N, m) feedforward, K: (N, m, n) feedback, v: (N+1, n), V: (N+1, n, n).
    The co-state along the nominal rollout is v_k itself (zero state
    deviation); control_gradients[k] = r_u + B_k' v_{k+1} is the control
    gradient of the stage Hamiltonian, whose max-abs is the stationarity
    residual.
    """

    k: np.ndarray
    K: np.ndarray
    v: np.ndarray
    V: np.ndarray
    control_gradients: np.ndarray

    @property
    def residual(self) -> float:
        return float(np.abs(self.control_gradients).max())


def backward_pass(
    traj: Trajectory,
    lin: tuple[np.ndarray, np.ndarray],
    quad: CostQuadratization,
    regularization: float = 0.0,
) -> BackwardPassResult:
    """Sweep the gain/co-state recursion backward along a trajectory.

    `regularization` is added to r_uu + B'V B before inversion.  Raises
    BackwardPassFailure if that matrix is not positive definite.
    """
    A, B = lin
    N, n, m = traj.horizon, traj.state_dim, traj.control_dim
    k_ff = np.zeros((N, m))
    K_fb = np.zeros((N, m, n))
    v = np.zeros((N + 1, n))
    V = np.zeros((N + 1, n, n))
    qu = np.zeros((N, m))

    v[N] = quad.phi_x
    V[N] = quad.phi_xx
    reg = regularization * np.eye(m)

    for k in reversed(range(N)):
        VB = V[k + 1] @ B[k]  # (n, m)
        Quu = quad.r_uu[k] + B[k].T @ VB + reg
        Quu = 0.5 * (Quu + Quu.T)
        try:
            cho = scipy.linalg.cho_factor(Quu)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise BackwardPassFailure(f"indefinite control Hessian at stage {k}") from exc

        qu[k] = quad.r_u[k] + B[k].T @ v[k + 1]
        k_ff[k] = scipy.linalg.cho_solve(cho, qu[k])
        K_fb[k] = scipy.linalg.cho_solve(cho, VB.T @ A[k])

        v[k] = quad.l_x[k] + A[k].T @ (v[k + 1] - VB @ k_ff[k])
        Vk = quad.l_xx[k] + A[k].T @ (V[k + 1] @ A[k] - VB @ K_fb[k])
        V[k] = 0.5 * (Vk + Vk.T)

    return BackwardPassResult(k=k_ff, K=K_fb, v=v, V=V, control_gradients=qu)


def forward_pass(
    sys: ControlAffineSystem,
    cost: DifferentiableCost,
    traj: Trajectory,
    gains: BackwardPassResult,
    step: float,
) -> Trajectory:
    """Roll out u_k - step*k_k - K_k (x - x_k) through the Euler dynamics.

    The result is dynamically feasible by construction.  Raises
    RolloutDivergence on a non-finite or runaway state.
    """
    N = traj.horizon
    states = np.zeros_like(traj.states)
    controls = np.zeros_like(traj.controls)
    states[0] = traj.states[0]
    for k in range(N):
        dx = states[k] - traj.states[k]
        controls[k] = traj.controls[k] - step * gains.k[k] - gains.K[k] @ dx
        states[k + 1] = euler_step(sys, states[k], controls[k], traj.dt)
        if not np.all(np.isfinite(states[k + 1])) or np.abs(states[k + 1]).max() > _STATE_NORM_LIMIT:
            raise RolloutDivergence(f"rollout diverged at stage {k + 1}")
    return Trajectory(dt=traj.dt, states=states, controls=controls)


def solve(
    sys: ControlAffineSystem,
    cost: DifferentiableCost,
    x0: np.ndarray,
    u_init: np.ndarray,
    dt: float,
    settings: ILQRSettings = ILQRSettings(),
) -> SolverResult:
    """Minimize the trajectory cost from x0 starting at the control guess u_init.

    Iterates backward/forward passes with a backtracking line search on the
    total cost (feedforward scaled, feedback kept) until the stationarity
    residual drops below `stationarity_tol` and the relative cost decrease
    below `convergence_tol`.  Cost is non-increasing across accepted
    iterations; the best trajectory so far is returned on any termination.
    """
    traj = rollout(sys, x0, u_init, dt)
    J = total_cost(cost, traj)
    reg = settings.regularization_init
    last_rel_decrease = 0.0
    iterations = 0
    trace: list[dict] = []
    termination = Termination.MAX_ITERATIONS
    residual = np.inf
    bp = None

    for _ in range(settings.max_iterations):
        lin = linearize_trajectory(sys, traj)
        quad = quadratize(cost, traj)

        while True:
            try:
                bp = backward_pass(traj, lin, quad, reg)
                break
            except BackwardPassFailure:
                reg = max(reg, 1e-6) * 10.0
                if reg > settings.regularization_max:
                    termination = Termination.NUMERICAL_FAILURE
                    break
        if termination is Termination.NUMERICAL_FAILURE:
            break

        residual = bp.residual
        if residual <= settings.stationarity_tol and last_rel_decrease <= settings.convergence_tol:
            termination = Termination.CONVERGED
            break

        # Backtracking on the feedforward term only; accept on strict decrease.
        alpha = 1.0
        accepted = None
        while alpha >= settings.line_search_min_step:
            try:
                candidate = forward_pass(sys, cost, traj, bp, alpha)
                J_new = total_cost(cost, candidate)
                if np.isfinite(J_new) and J_new < J:
                    accepted = (candidate, J_new)
                    break
            except RolloutDivergence:
                pass
            alpha *= settings.line_search_backtrack

        if accepted is None:
            if residual <= settings.stationarity_tol:
                termination = Termination.CONVERGED
                break
            reg = max(reg, 1e-6) * 10.0
            if reg > settings.regularization_max:
                termination = Termination.LINE_SEARCH_FAILURE
                break
            continue

        candidate, J_new = accepted
        last_rel_decrease = (J - J_new) / (1.0 + abs(J))
        traj, J = candidate, J_new
        iterations += 1
        reg *= 0.5
        if reg < 1e-12:
            reg = 0.0
        trace.append(
            {"iteration": iterations, "cost": J, "alpha": alpha,
             "regularization": reg, "residual": residual}
        )

    if termination is not Termination.CONVERGED and bp is not None:
        # refresh the residual at the returned trajectory
        try:
            bp = backward_pass(traj, linearize_trajectory(sys, traj), quadratize(cost, traj),
                               max(reg, 0.0))
            residual = bp.residual
        except BackwardPassFailure:
            pass

    return SolverResult(
        trajectory=traj,
        cost=J,
        iterations=iterations,
        termination=termination,
        stationarity_residual=float(residual),
        trace=trace,
    )
