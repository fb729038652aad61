"""Control-affine dynamics models, forward-Euler discretization, and linearization.

Continuous-time systems have the form

    dx/dt = f(x) + G(x) u,

with drift f and input matrix G.  Discretization is forward Euler only:
x_{k+1} = x_k + dt * (f(x_k) + G(x_k) u_k).  The optimizers consume the
discrete-time Jacobians A = I + dt*(df/dx + d(Gu)/dx) and B = dt*G.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np


class ControlAffineSystem(ABC):
    """Continuous-time control-affine dynamics with analytic Jacobians.

    Subclasses provide the drift f(x), the input matrix G(x), and the state
    Jacobians of f(x) and of G(x)u.  All maps are total on R^n; models are
    immutable and safe to share across threads.
    """

    state_dim: int
    control_dim: int

    @abstractmethod
    def drift(self, x: np.ndarray) -> np.ndarray:
        """f(x), shape (n,)."""

    @abstractmethod
    def input_matrix(self, x: np.ndarray) -> np.ndarray:
        """G(x), shape (n, m)."""

    @abstractmethod
    def drift_jacobian(self, x: np.ndarray) -> np.ndarray:
        """df/dx, shape (n, n)."""

    @abstractmethod
    def input_matrix_jacobian(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """d(G(x)u)/dx for fixed u, shape (n, n)."""


@dataclass(frozen=True)
class PendulumModel(ControlAffineSystem):
    """Torque-actuated pendulum.

    State [theta, omega] with theta = 0 upright and theta = pi hanging;
    control is the joint torque.  Equations of motion:

        theta'' = (g / l) sin(theta) + u / (m l^2)
    """

    rod_length: float = 0.5
    mass: float = 0.5
    gravity: float = 9.81

    state_dim = 2
    control_dim = 1

    def drift(self, x):
        theta, omega = x
        return np.array([omega, (self.gravity / self.rod_length) * np.sin(theta)])

    def input_matrix(self, x):
        return np.array([[0.0], [1.0 / (self.mass * self.rod_length**2)]])

    def drift_jacobian(self, x):
        theta = x[0]
        return np.array(
            [[0.0, 1.0], [(self.gravity / self.rod_length) * np.cos(theta), 0.0]]
        )

    def input_matrix_jacobian(self, x, u):
        return np.zeros((2, 2))


@dataclass(frozen=True)
class CartpoleModel(ControlAffineSystem):
    """Cart with a pendulum pole, force-actuated at the cart.

    State [p, p', theta, theta'] with theta = 0 upright (pole tip at
    p + l sin(theta), l cos(theta)); control is the horizontal force on the
    cart.  With h(theta) = mc + mp sin^2(theta):

        p''     = [u + mp sin(theta) (l theta'^2 - g cos(theta))] / h
        theta'' = [(mc + mp) g sin(theta) - mp l theta'^2 sin(theta) cos(theta)
                   - u cos(theta)] / (l h)

    The pole is a point mass mp at distance l from the pivot.
    """

    cart_mass: float = 1.0
    pole_mass: float = 0.01
    pole_length: float = 0.6
    gravity: float = 9.81

    state_dim = 4
    control_dim = 1

    def drift(self, x):
        mc, mp, length, g = self.cart_mass, self.pole_mass, self.pole_length, self.gravity
        _, pdot, theta, thetadot = x
        s, c = np.sin(theta), np.cos(theta)
        h = mc + mp * s * s
        pddot = mp * s * (length * thetadot**2 - g * c) / h
        thetaddot = ((mc + mp) * g * s - mp * length * thetadot**2 * s * c) / (length * h)
        return np.array([pdot, pddot, thetadot, thetaddot])

    def input_matrix(self, x):
        mc, mp, length = self.cart_mass, self.pole_mass, self.pole_length
        theta = x[2]
        s, c = np.sin(theta), np.cos(theta)
        h = mc + mp * s * s
        return np.array([[0.0], [1.0 / h], [0.0], [-c / (length * h)]])

    def drift_jacobian(self, x):
        mc, mp, length, g = self.cart_mass, self.pole_mass, self.pole_length, self.gravity
        _, _, theta, thetadot = x
        s, c = np.sin(theta), np.cos(theta)
        h = mc + mp * s * s
        hp = 2.0 * mp * s * c  # dh/dtheta

        J = np.zeros((4, 4))
        J[0, 1] = 1.0
        J[2, 3] = 1.0

        # d(p'')/dtheta via quotient rule on [mp s (l w^2 - g c)] / h
        num = mp * s * (length * thetadot**2 - g * c)
        dnum = mp * (c * (length * thetadot**2 - g * c) + s * g * s)
        J[1, 2] = (dnum * h - num * hp) / h**2
        J[1, 3] = mp * s * (2.0 * length * thetadot) / h

        # d(theta'')/dtheta on [(mc+mp) g s - mp l w^2 s c] / (l h)
        num2 = (mc + mp) * g * s - mp * length * thetadot**2 * s * c
        dnum2 = (mc + mp) * g * c - mp * length * thetadot**2 * (c * c - s * s)
        J[3, 2] = (dnum2 * h - num2 * hp) / (length * h**2)
        J[3, 3] = -mp * length * 2.0 * thetadot * s * c / (length * h)
        return J

    def input_matrix_jacobian(self, x, u):
        mc, mp, length = self.cart_mass, self.pole_mass, self.pole_length
        theta = x[2]
        s, c = np.sin(theta), np.cos(theta)
        h = mc + mp * s * s
        hp = 2.0 * mp * s * c

        J = np.zeros((4, 4))
        # rows of G that depend on theta: G[1] = 1/h, G[3] = -c/(l h)
        J[1, 2] = -hp / h**2 * u[0]
        J[3, 2] = (s * h + c * hp) / (length * h**2) * u[0]
        return J


@dataclass(frozen=True)
class LinearSystem(ControlAffineSystem):
    """Linear time-invariant continuous dynamics dx/dt = A x + B u.

    Used for oracle problems (e.g. double integrator) where the discrete
    optimum is available in closed form via a Riccati recursion.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.asarray(self.b, dtype=float)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        if a.shape[0] != a.shape[1] or b.shape[0] != a.shape[0]:
            raise ValueError("inconsistent linear system shapes")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "state_dim", a.shape[0])
        object.__setattr__(self, "control_dim", b.shape[1])

    def drift(self, x):
        return self.a @ x

    def input_matrix(self, x):
        return self.b

    def drift_jacobian(self, x):
        return self.a

    def input_matrix_jacobian(self, x, u):
        return np.zeros((self.state_dim, self.state_dim))


@dataclass(frozen=True)
class Trajectory:
    """A state sequence x_0..x_N and control sequence u_0..u_{N-1} at step dt."""

    dt: float
    states: np.ndarray  # (N+1, n)
    controls: np.ndarray  # (N, m)

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        controls = np.asarray(self.controls, dtype=float)
        if controls.ndim == 1:
            controls = controls.reshape(-1, 1)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(states) != len(controls) + 1:
            raise ValueError(
                f"need len(states) == len(controls) + 1, "
                f"got {len(states)} and {len(controls)}"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)

    @property
    def horizon(self) -> int:
        return len(self.controls)

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def control_dim(self) -> int:
        return self.controls.shape[1]


def _check_dims(sys: ControlAffineSystem, x: np.ndarray, u: np.ndarray) -> tuple:
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != (sys.state_dim,):
        raise ValueError(f"state has shape {x.shape}, expected ({sys.state_dim},)")
    if u.shape != (sys.control_dim,):
        raise ValueError(f"control has shape {u.shape}, expected ({sys.control_dim},)")
    return x, u


def continuous_derivative(sys: ControlAffineSystem, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Evaluate dx/dt = f(x) + G(x) u."""
    x, u = _check_dims(sys, x, u)
    return sys.drift(x) + sys.input_matrix(x) @ u


def euler_step(sys: ControlAffineSystem, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """One forward-Euler step x + dt * (f(x) + G(x) u)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return x + dt * continuous_derivative(sys, x, u)


def linearize_discrete(
    sys: ControlAffineSystem, x: np.ndarray, u: np.ndarray, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians (A, B) of the Euler step with respect to (x, u).

    A = I + dt * (df/dx + d(G u)/dx), B = dt * G(x).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, u = _check_dims(sys, x, u)
    A = np.eye(sys.state_dim) + dt * (sys.drift_jacobian(x) + sys.input_matrix_jacobian(x, u))
    B = dt * sys.input_matrix(x)
    return A, B


def rollout(sys: ControlAffineSystem, x0: np.ndarray, controls: np.ndarray, dt: float) -> Trajectory:
    """Propagate controls through the Euler dynamics from x0.

    The result is dynamically feasible by construction.
    """
    controls = np.asarray(controls, dtype=float)
    if controls.ndim == 1:
        controls = controls.reshape(-1, 1)
    N = len(controls)
    states = np.zeros((N + 1, sys.state_dim))
    states[0] = np.asarray(x0, dtype=float)
    for k in range(N):
        states[k + 1] = euler_step(sys, states[k], controls[k], dt)
    return Trajectory(dt=dt, states=states, controls=controls)


def linearize_trajectory(
    sys: ControlAffineSystem, traj: Trajectory
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked discrete Jacobians (A_k, B_k) along a trajectory.

    Returns arrays of shape (N, n, n) and (N, n, m).
    """
    N, n, m = traj.horizon, sys.state_dim, sys.control_dim
    A = np.zeros((N, n, n))
    B = np.zeros((N, n, m))
    for k in range(N):
        A[k], B[k] = linearize_discrete(sys, traj.states[k], traj.controls[k], traj.dt)
    return A, B


def dynamics_defects(sys: ControlAffineSystem, traj: Trajectory) -> np.ndarray:
    """Per-step defects x_{k+1} - euler_step(x_k, u_k, dt), shape (N, n).

    A dynamically feasible trajectory has all entries <= 1e-12 in magnitude.
    """
    N = traj.horizon
    defects = np.zeros((N, sys.state_dim))
    for k in range(N):
        defects[k] = traj.states[k + 1] - euler_step(sys, traj.states[k], traj.controls[k], traj.dt)
    return defects
