"""Full-space SQP over stacked state/control perturbations.

Treats the discretized problem as an equality-constrained NLP in the
variables z = (x_1..x_N, u_0..u_{N-1}) with the Euler dynamics as
constraints.  Each iteration builds a QP from the exact cost Hessian and
the linearized constraints and solves its KKT system by a dense
factorization over all nN + mN + nN unknowns; no causal structure is
exploited, so the per-iteration cost is cubic in the horizon N.
Globalization is a backtracking line search on an l1 merit function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cost import DifferentiableCost, quadratize, total_cost
from .dynamics import ControlAffineSystem, Trajectory, euler_step, linearize_trajectory, rollout
from .results import SolverResult, Termination, stationarity_residual

_ARMIJO_C = 1e-4


@dataclass(frozen=True)
class SQPSettings:
    max_iterations: int = 200
    kkt_tol: float = 1e-6  # on the max KKT residual of the NLP
    merit_penalty_init: float = 10.0
    line_search_backtrack: float = 0.5
    line_search_min_step: float = 1e-6
    hessian_shift: float = 1e-8  # fallback regularization of the state blocks

    def __post_init__(self):
        if min(self.max_iterations, self.kkt_tol, self.merit_penalty_init,
               self.line_search_min_step, self.hessian_shift) <= 0:
            raise ValueError("settings must be positive")
        if not 0.0 < self.line_search_backtrack < 1.0:
            raise ValueError("line_search_backtrack must be in (0, 1)")


class SingularKKT(RuntimeError):
    """The dense KKT factorization failed or left a large residual."""


@dataclass
class QPSubproblem:
    """One QP in the perturbations (dx_1..dx_N, du_0..du_{N-1}).

    H is block diagonal (state blocks then control blocks), g the exact cost
    gradient at the expansion point, C the linearized-dynamics constraint
    matrix, and r the dynamics defects x_k - q(x_{k-1}, u_{k-1}); the
    constraints read C z = -r.
    """

    H: np.ndarray  # (D, D), D = nN + mN
    g: np.ndarray  # (D,)
    C: np.ndarray  # (nN, D)
    r: np.ndarray  # (nN,)
    n: int
    m: int
    N: int

    @property
    def dim(self) -> int:
        return len(self.g)


def build_qp(sys: ControlAffineSystem, cost: DifferentiableCost, traj: Trajectory) -> QPSubproblem:
    """Assemble the QP around a (possibly infeasible) trajectory iterate."""
    N, n, m = traj.horizon, traj.state_dim, traj.control_dim
    A, B = linearize_trajectory(sys, traj)
    quad = quadratize(cost, traj)

    D = n * N + m * N
    H = np.zeros((D, D))
    g = np.zeros(D)
    C = np.zeros((n * N, D))
    r = np.zeros(n * N)

    def xoff(k):  # column offset of dx_k, k = 1..N
        return (k - 1) * n

    uoff0 = n * N

    for k in range(1, N):
        H[xoff(k):xoff(k) + n, xoff(k):xoff(k) + n] = quad.l_xx[k]
        g[xoff(k):xoff(k) + n] = quad.l_x[k]
    H[xoff(N):xoff(N) + n, xoff(N):xoff(N) + n] = quad.phi_xx
    g[xoff(N):xoff(N) + n] = quad.phi_x
    for k in range(N):
        o = uoff0 + k * m
        H[o:o + m, o:o + m] = quad.r_uu[k]
        g[o:o + m] = quad.r_u[k]

    eye = np.eye(n)
    for k in range(1, N + 1):
        row = (k - 1) * n
        C[row:row + n, xoff(k):xoff(k) + n] = eye
        if k >= 2:
            C[row:row + n, xoff(k - 1):xoff(k - 1) + n] = -A[k - 1]
        o = uoff0 + (k - 1) * m
        C[row:row + n, o:o + m] = -B[k - 1]
        r[row:row + n] = traj.states[k] - euler_step(
            sys, traj.states[k - 1], traj.controls[k - 1], traj.dt
        )

    return QPSubproblem(H=H, g=g, C=C, r=r, n=n, m=m, N=N)


class KKTFactorization:
    """Dense LU of the KKT matrix [H C'; C 0], reusable for several right sides."""

    def __init__(self, qp: QPSubproblem):
        D, nc = qp.dim, len(qp.r)
        K = np.zeros((D + nc, D + nc))
        K[:D, :D] = qp.H
        K[:D, D:] = qp.C.T
        K[D:, :D] = qp.C
        try:
            self._lu = scipy.linalg.lu_factor(K)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise SingularKKT("KKT factorization failed") from exc
        self._K = K
        self.dim = D

    def solve(self, rhs: np.ndarray, check_tol: float | None = None) -> np.ndarray:
        sol = scipy.linalg.lu_solve(self._lu, rhs)
        sol += scipy.linalg.lu_solve(self._lu, rhs - self._K @ sol)  # one refinement
        if check_tol is not None:
            resid = np.abs(self._K @ sol - rhs).max()
            if not np.isfinite(resid) or resid > check_tol:
                raise SingularKKT(f"KKT residual {resid:.3e} too large")
        return sol


def solve_eq_qp(qp: QPSubproblem) -> tuple[np.ndarray, np.ndarray]:
    """Solve [H C'; C 0] [z; mu] = [-g; -r] by dense LU with one refinement.

    Returns (step, multipliers).  Raises SingularKKT if the factorization
    fails or the residual exceeds 1e-9 * (1 + ||g||_inf).
    """
    D = qp.dim
    kkt = KKTFactorization(qp)
    rhs = np.concatenate([-qp.g, -qp.r])
    sol = kkt.solve(rhs, check_tol=1e-9 * (1.0 + np.abs(qp.g).max()))
    return sol[:D], sol[D:]


def _shift_state_blocks(qp: QPSubproblem, shift: float) -> QPSubproblem:
    H = qp.H.copy()
    nN = qp.n * qp.N
    H[:nN, :nN] += shift * np.eye(nN)
    return QPSubproblem(H=H, g=qp.g, C=qp.C, r=qp.r, n=qp.n, m=qp.m, N=qp.N)


def _unpack(z: np.ndarray, x0: np.ndarray, n: int, m: int, N: int, dt: float) -> Trajectory:
    states = np.vstack([x0, z[: n * N].reshape(N, n)])
    controls = z[n * N:].reshape(N, m)
    return Trajectory(dt=dt, states=states, controls=controls)


def solve(
    sys: ControlAffineSystem,
    cost: DifferentiableCost,
    x0: np.ndarray,
    x_init: np.ndarray,
    u_init: np.ndarray,
    dt: float,
    settings: SQPSettings = SQPSettings(),
) -> SolverResult:
    """Solve the discretized problem from a (state, control) initial guess.

    x_init has N+1 rows with x_init[0] == x0; the guess need not be
    dynamically feasible.  Iterates QP steps with a backtracking line search
    on the l1 merit function cost + penalty * sum_k ||defect_k||_1 until the
    max KKT residual of the NLP drops below kkt_tol.  The reported
    trajectory is re-rolled through the dynamics, so it is feasible even
    though the iterate is matched only to ~kkt_tol.
    """
    x_init = np.atleast_2d(np.asarray(x_init, dtype=float))
    u_init = np.asarray(u_init, dtype=float)
    if u_init.ndim == 1:
        u_init = u_init.reshape(-1, 1)
    x0 = np.asarray(x0, dtype=float)
    N, n, m = len(u_init), sys.state_dim, sys.control_dim
    if len(x_init) != N + 1:
        raise ValueError("x_init must have one more row than u_init")
    if not np.allclose(x_init[0], x0):
        raise ValueError("x_init[0] must equal x0")

    traj = Trajectory(dt=dt, states=x_init, controls=u_init)
    penalty = settings.merit_penalty_init
    iterations = 0
    trace: list[dict] = []
    termination = Termination.MAX_ITERATIONS
    kkt_residual = np.inf

    def defects_of(t: Trajectory) -> np.ndarray:
        d = np.zeros(n * N)
        for k in range(t.horizon):
            step_k = euler_step(sys, t.states[k], t.controls[k], t.dt)
            d[k * n:(k + 1) * n] = t.states[k + 1] - step_k
        return d

    def merit(t: Trajectory, rho: float) -> float:
        return total_cost(cost, t) + rho * float(np.abs(defects_of(t)).sum())

    for _ in range(settings.max_iterations):
        qp = build_qp(sys, cost, traj)
        try:
            kkt = KKTFactorization(qp)
            sol = kkt.solve(np.concatenate([-qp.g, -qp.r]),
                            check_tol=1e-9 * (1.0 + np.abs(qp.g).max()))
        except SingularKKT:
            try:
                qp = _shift_state_blocks(qp, settings.hessian_shift)
                kkt = KKTFactorization(qp)
                sol = kkt.solve(np.concatenate([-qp.g, -qp.r]),
                                check_tol=1e-9 * (1.0 + np.abs(qp.g).max()))
            except SingularKKT:
                termination = Termination.NUMERICAL_FAILURE
                break
        step, mult = sol[:qp.dim], sol[qp.dim:]

        stat = np.abs(qp.g + qp.C.T @ mult).max()
        feas = np.abs(qp.r).max() if len(qp.r) else 0.0
        kkt_residual = max(stat, feas)
        if kkt_residual <= settings.kkt_tol:
            termination = Termination.CONVERGED
            break

        # adaptive l1 penalty: at least twice the current multiplier scale,
        # re-evaluated each iteration so a wild early phase cannot pin the
        # merit to feasibility forever
        penalty = max(settings.merit_penalty_init, 2.0 * np.abs(mult).max())
        defect_l1 = np.abs(qp.r).sum()
        merit_0 = total_cost(cost, traj) + penalty * defect_l1
        # model directional derivative; <= -s'Hs when penalty >= 2||mult||_inf
        d_merit = float(qp.g @ step) - penalty * defect_l1
        d_merit = min(d_merit, -np.finfo(float).tiny)

        z = np.concatenate([traj.states[1:].ravel(), traj.controls.ravel()])

        def acceptable(candidate: Trajectory, alpha: float) -> bool:
            m_new = merit(candidate, penalty)
            return np.isfinite(m_new) and m_new <= merit_0 + _ARMIJO_C * alpha * d_merit

        accepted = None
        full = _unpack(z + step, x0, n, m, N, dt)
        if acceptable(full, 1.0):
            accepted, alpha = full, 1.0
        else:
            # second-order correction against the Maratos effect: shift the
            # full step by the constraint values it leaves behind
            soc_rhs = np.concatenate([np.zeros(qp.dim), -defects_of(full)])
            soc = kkt.solve(soc_rhs)[:qp.dim]
            corrected = _unpack(z + step + soc, x0, n, m, N, dt)
            if acceptable(corrected, 1.0):
                accepted, alpha = corrected, 1.0

        if accepted is None:
            alpha = settings.line_search_backtrack
            while alpha >= settings.line_search_min_step:
                candidate = _unpack(z + alpha * step, x0, n, m, N, dt)
                if acceptable(candidate, alpha):
                    accepted = candidate
                    break
                alpha *= settings.line_search_backtrack

        if accepted is None:
            termination = Termination.LINE_SEARCH_FAILURE
            break

        traj = accepted
        iterations += 1
        trace.append(
            {"iteration": iterations, "merit": merit_0, "kkt_residual": kkt_residual,
             "alpha": alpha, "penalty": penalty}
        )

    reported = rollout(sys, x0, traj.controls, dt)
    return SolverResult(
        trajectory=reported,
        cost=total_cost(cost, reported),
        iterations=iterations,
        termination=termination,
        stationarity_residual=stationarity_residual(sys, cost, reported),
        trace=trace,
    )
