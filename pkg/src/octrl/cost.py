"""Separable trajectory costs and their quadratic expansions.

The discrete objective over a trajectory is

    J = phi(x_N) + dt * sum_{k=0}^{N-1} [ l(x_k) + r(u_k) ],

with a separable stage cost l(x) + r(u) and terminal cost phi(x).  The
benchmark instance is quadratic: l(x) = x'Qx, r(u) = u'Ru,
phi(x) = 0.5 x'S_f x.  Solvers only touch the `DifferentiableCost`
interface, so non-quadratic stage costs plug in unchanged.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Trajectory


class DifferentiableCost(ABC):
    """Separable stage cost l(x) + r(u) plus terminal phi(x), with derivatives."""

    @abstractmethod
    def state_stage(self, x: np.ndarray) -> float: ...

    @abstractmethod
    def state_stage_grad(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def state_stage_hess(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def control_stage(self, u: np.ndarray) -> float: ...

    @abstractmethod
    def control_stage_grad(self, u: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def control_stage_hess(self, u: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def terminal(self, x: np.ndarray) -> float: ...

    @abstractmethod
    def terminal_grad(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def terminal_hess(self, x: np.ndarray) -> np.ndarray: ...


def _symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _as_weight(w, dim: int) -> np.ndarray:
    """Broadcast a scalar or diagonal to a full (dim, dim) weight matrix."""
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        return float(w) * np.eye(dim)
    if w.ndim == 1:
        if len(w) != dim:
            raise ValueError(f"diagonal weight has length {len(w)}, expected {dim}")
        return np.diag(w)
    if w.shape != (dim, dim):
        raise ValueError(f"weight has shape {w.shape}, expected ({dim}, {dim})")
    return w.copy()


@dataclass(frozen=True)
class QuadraticCost(DifferentiableCost):
    """Quadratic weights (Q, R, S_f); Q and S_f PSD, R strictly PD.

    Matrices are symmetrized at construction, so the cost is insensitive to
    any skew part of the inputs.  Scalars and diagonals broadcast to
    `scale * identity` / `diag(...)`.
    """

    Q: np.ndarray
    R: np.ndarray
    S_f: np.ndarray
    state_dim: int = field(default=0)
    control_dim: int = field(default=0)

    def __post_init__(self):
        n = self.state_dim or np.atleast_2d(np.asarray(self.Q)).shape[0]
        m = self.control_dim or np.atleast_2d(np.asarray(self.R)).shape[0]
        Q = _symmetrize(_as_weight(self.Q, n))
        R = _symmetrize(_as_weight(self.R, m))
        S_f = _symmetrize(_as_weight(self.S_f, n))
        eig_floor = -1e-10 * max(1.0, np.abs(Q).max(), np.abs(S_f).max())
        if np.linalg.eigvalsh(Q).min() < eig_floor:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(S_f).min() < eig_floor:
            raise ValueError("S_f must be positive semidefinite")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise ValueError("R must be strictly positive definite") from None
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "S_f", S_f)
        object.__setattr__(self, "state_dim", n)
        object.__setattr__(self, "control_dim", m)

    def state_stage(self, x):
        return float(x @ self.Q @ x)

    def state_stage_grad(self, x):
        return 2.0 * self.Q @ x

    def state_stage_hess(self, x):
        return 2.0 * self.Q

    def control_stage(self, u):
        return float(u @ self.R @ u)

    def control_stage_grad(self, u):
        return 2.0 * self.R @ u

    def control_stage_hess(self, u):
        return 2.0 * self.R

    def terminal(self, x):
        return 0.5 * float(x @ self.S_f @ x)

    def terminal_grad(self, x):
        return self.S_f @ x

    def terminal_hess(self, x):
        return self.S_f.copy()


@dataclass(frozen=True)
class CostQuadratization:
    """Stage-wise derivatives of the trajectory cost at an expansion point.

    Stage terms carry the dt factor of the discrete objective:
    l_x[k] = dt * d l/dx at x_k, r_uu[k] = dt * d2 r/du2 at u_k, etc.
    Terminal terms phi_x, phi_xx are unscaled.
    """

    l_x: np.ndarray  # (N, n)
    l_xx: np.ndarray  # (N, n, n)
    r_u: np.ndarray  # (N, m)
    r_uu: np.ndarray  # (N, m, m)
    phi_x: np.ndarray  # (n,)
    phi_xx: np.ndarray  # (n, n)


def total_cost(cost: DifferentiableCost, traj: Trajectory) -> float:
    """Evaluate phi(x_N) + dt * sum_k [l(x_k) + r(u_k)] over the trajectory."""
    stage = 0.0
    for k in range(traj.horizon):
        stage += cost.state_stage(traj.states[k]) + cost.control_stage(traj.controls[k])
    return cost.terminal(traj.states[-1]) + traj.dt * stage


def quadratize(cost: DifferentiableCost, traj: Trajectory) -> CostQuadratization:
    """Gradients and Hessians of the trajectory cost along a trajectory."""
    N, n, m = traj.horizon, traj.state_dim, traj.control_dim
    dt = traj.dt
    l_x = np.zeros((N, n))
    l_xx = np.zeros((N, n, n))
    r_u = np.zeros((N, m))
    r_uu = np.zeros((N, m, m))
    for k in range(N):
        l_x[k] = dt * cost.state_stage_grad(traj.states[k])
        l_xx[k] = dt * cost.state_stage_hess(traj.states[k])
        r_u[k] = dt * cost.control_stage_grad(traj.controls[k])
        r_uu[k] = dt * cost.control_stage_hess(traj.controls[k])
    return CostQuadratization(
        l_x=l_x,
        l_xx=l_xx,
        r_u=r_u,
        r_uu=r_uu,
        phi_x=cost.terminal_grad(traj.states[-1]),
        phi_xx=cost.terminal_hess(traj.states[-1]),
    )
