"""Scalar-system characteristic ODEs, TPBVP shooting, and uniqueness checks.

For a scalar problem

    min  phi(x(t_f)) + int_0^t_f [ l(x) + R(u) ] dt
    s.t. dx/dt = f(x) + g(x) u,

with R strictly convex, the pointwise Hamiltonian minimizer is the unique u
solving R_u(u) + lam*g(x) = 0.  Substituting it into the state/co-state
equations gives the closed-loop characteristic ODEs

    dx/dt   = f + g * u*(lam*g)
    dlam/dt = -l_x - lam*f_x - lam*g_x * u*(lam*g),

integrated backward in time from terminal data (x_tf, lam(t_f) = phi_x(x_tf)).
A characteristic that lands on x(0) = x0 solves the two-point boundary value
problem of the minimum principle; strict monotonicity of the endpoint map
x_tf -> x(0) certifies that at most one does.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_BLOWUP_LIMIT = 1e12


class IntegrationFailure(RuntimeError):
    """Backward integration produced non-finite values (finite-time blow-up)."""

    def __init__(self, time_reached: float):
        super().__init__(f"characteristic integration blew up; last finite time t = {time_reached:g}")
        self.time_reached = time_reached


@dataclass(frozen=True)
class ScalarSystem:
    """Scalar dynamics/cost data with first derivatives.

    All callables must accept numpy arrays elementwise.  R must be strictly
    convex (R_uu > 0 on the working range).
    """

    f: Callable
    f_x: Callable
    g: Callable
    g_x: Callable
    l: Callable
    l_x: Callable
    phi: Callable
    phi_x: Callable
    R: Callable
    R_u: Callable
    R_uu: Callable


def scalar_lqr_system(a: float, b: float, q: float, r: float, s_f: float) -> ScalarSystem:
    """f = a*x, g = b, l = q*x^2, R = r*u^2/2, phi = s_f*x^2/2."""
    return ScalarSystem(
        f=lambda x: a * x, f_x=lambda x: a * np.ones_like(x),
        g=lambda x: b * np.ones_like(x), g_x=lambda x: np.zeros_like(x),
        l=lambda x: q * x**2, l_x=lambda x: 2.0 * q * x,
        phi=lambda x: 0.5 * s_f * x**2, phi_x=lambda x: s_f * x,
        R=lambda u: 0.5 * r * u**2, R_u=lambda u: r * u,
        R_uu=lambda u: r * np.ones_like(u),
    )


def custom_scalar_system(
    linear: float = 0.0,
    sine: float = 1.0,
    gain: float = 1.0,
    q: float = 1.0,
    r: float = 5.0,
    s_f: float = 0.0,
) -> ScalarSystem:
    """f = linear*x + sine*sin(x), g = gain, l = q*x^2, R = r*u^2, phi = s_f*x^2/2.

    The default is the swing-like benchmark dx/dt = sin(x) + u with
    quadratic costs.
    """
    return ScalarSystem(
        f=lambda x: linear * x + sine * np.sin(x),
        f_x=lambda x: linear + sine * np.cos(x),
        g=lambda x: gain * np.ones_like(x), g_x=lambda x: np.zeros_like(x),
        l=lambda x: q * x**2, l_x=lambda x: 2.0 * q * x,
        phi=lambda x: 0.5 * s_f * x**2, phi_x=lambda x: s_f * x,
        R=lambda u: r * u**2, R_u=lambda u: 2.0 * r * u,
        R_uu=lambda u: 2.0 * r * np.ones_like(u),
    )


def stationary_control(sys: ScalarSystem, z):
    """The unique u with R_u(u) = -z, i.e. the Hamiltonian minimizer at z = lam*g.

    Solved by safeguarded Newton with a doubling bracket; the residual
    |R_u(u) + z| is driven below 1e-12 * (1 + |z|).  Raises ValueError when
    z lies outside the range of -R_u.  Accepts scalars or arrays; non-finite
    entries map to nan.
    """
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    scalar_input = np.ndim(z) == 0
    bad = ~np.isfinite(z_arr)
    tol = 1e-12 * (1.0 + np.abs(np.where(bad, 0.0, z_arr)))

    lo = np.full_like(z_arr, -1.0)
    hi = np.ones_like(z_arr)
    with np.errstate(all="ignore"):
        for _ in range(200):
            need_lo = ~bad & ~(sys.R_u(lo) + z_arr <= 0)
            need_hi = ~bad & ~(sys.R_u(hi) + z_arr >= 0)
            if not (need_lo.any() or need_hi.any()):
                break
            lo = np.where(need_lo, 2.0 * lo, lo)
            hi = np.where(need_hi, 2.0 * hi, hi)
        else:
            raise ValueError("z outside the range of -R_u (no stationary control)")

        u = 0.5 * (lo + hi)
        for _ in range(300):
            h = sys.R_u(u) + z_arr
            done = bad | (np.abs(h) <= tol)
            if done.all():
                break
            lo = np.where(~done & (h < 0), u, lo)
            hi = np.where(~done & (h > 0), u, hi)
            newton = u - h / sys.R_uu(u)
            fallback = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
            u = np.where(done, u, np.where(fallback, 0.5 * (lo + hi), newton))
        else:
            raise RuntimeError("control-gradient inversion did not converge")

    u = np.where(bad, np.nan, u)
    return float(u[0]) if scalar_input else u


def controls_along(sys: ScalarSystem, states: np.ndarray, costates: np.ndarray) -> np.ndarray:
    """Reconstruct u(t) = u*(lam(t) * g(x(t))) on a grid."""
    return stationary_control(sys, np.asarray(costates) * sys.g(np.asarray(states)))


@dataclass
class CharacteristicPath:
    """Backward-integrated characteristic(s) on a dense forward-ordered grid.

    For a scalar terminal state the arrays are 1-D of length S+1; for a batch
    of terminal states they have shape (S+1, B).  Columns that blew up are
    nan from the failure time onward.
    """

    times: np.ndarray
    states: np.ndarray
    costates: np.ndarray


def _characteristic_rhs(sys: ScalarSystem, x, lam):
    g = sys.g(x)
    u = stationary_control(sys, lam * g)
    dx = sys.f(x) + g * u
    dlam = -sys.l_x(x) - lam * sys.f_x(x) - lam * sys.g_x(x) * u
    return dx, dlam


def integrate_characteristics_backward(
    sys: ScalarSystem, x_tf, t_f: float, dt_int: float
) -> CharacteristicPath:
    """Integrate the characteristic ODEs backward from (x_tf, phi_x(x_tf)).

    Fixed-step classical RK4 with step ~dt_int (t_f is divided into an
    integer number of steps).  x_tf may be a scalar or an array of terminal
    states integrated in one batch.  A scalar input that blows up raises
    IntegrationFailure with the last finite time; batched inputs record nan.
    """
    if dt_int <= 0 or t_f <= 0:
        raise ValueError("t_f and dt_int must be positive")
    scalar_input = np.ndim(x_tf) == 0
    x = np.atleast_1d(np.asarray(x_tf, dtype=float)).copy()
    steps = max(1, int(round(t_f / dt_int)))
    h = t_f / steps
    times = np.linspace(0.0, t_f, steps + 1)

    states = np.full((steps + 1, x.size), np.nan)
    costates = np.full((steps + 1, x.size), np.nan)
    lam = np.asarray(sys.phi_x(x), dtype=float) * np.ones_like(x)
    states[steps], costates[steps] = x, lam
    last_finite_time = np.full(x.size, t_f)

    with np.errstate(all="ignore"):
        for i in range(steps, 0, -1):
            k1x, k1l = _characteristic_rhs(sys, x, lam)
            k2x, k2l = _characteristic_rhs(sys, x - 0.5 * h * k1x, lam - 0.5 * h * k1l)
            k3x, k3l = _characteristic_rhs(sys, x - 0.5 * h * k2x, lam - 0.5 * h * k2l)
            k4x, k4l = _characteristic_rhs(sys, x - h * k3x, lam - h * k3l)
            x = x - (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            lam = lam - (h / 6.0) * (k1l + 2.0 * k2l + 2.0 * k3l + k4l)

            dead = ~(np.isfinite(x) & np.isfinite(lam)) | (np.abs(x) > _BLOWUP_LIMIT) | (
                np.abs(lam) > _BLOWUP_LIMIT
            )
            newly_dead = dead & np.isfinite(states[i])
            last_finite_time[newly_dead] = times[i]
            x = np.where(dead, np.nan, x)
            lam = np.where(dead, np.nan, lam)
            states[i - 1], costates[i - 1] = x, lam

    if scalar_input:
        if not np.isfinite(states[0, 0]):
            raise IntegrationFailure(float(last_finite_time[0]))
        return CharacteristicPath(times=times, states=states[:, 0], costates=costates[:, 0])
    return CharacteristicPath(times=times, states=states, costates=costates)


def backward_endpoint_map(
    sys: ScalarSystem, x_tf_grid: np.ndarray, t_f: float, dt_int: float
) -> tuple[np.ndarray, np.ndarray]:
    """Map each terminal state to (x(0), lam(0)); nan where the ODE blew up."""
    path = integrate_characteristics_backward(sys, np.asarray(x_tf_grid, dtype=float), t_f, dt_int)
    return path.states[0], path.costates[0]


@dataclass
class ShootingResult:
    """Outcome of TPBVP shooting on the terminal state.

    `roots` holds every bracketed terminal state whose characteristic lands
    on x0 (more than one root falsifies uniqueness for the instance); the
    returned path belongs to roots[0].  `found` is False when the scan
    produced no bracket.
    """

    found: bool
    roots: np.ndarray
    brackets: list = field(default_factory=list)
    x_tf: float | None = None
    times: np.ndarray | None = None
    states: np.ndarray | None = None
    costates: np.ndarray | None = None
    controls: np.ndarray | None = None
    boundary_error: float | None = None


def solve_tpbvp_shooting(
    sys: ScalarSystem,
    x0: float,
    t_f: float,
    dt_int: float,
    search_radius: float = 10.0,
    scan_points: int = 201,
) -> ShootingResult:
    """Find terminal state(s) whose backward characteristic lands on x0.

    Scans x_tf over [x0 - search_radius, x0 + search_radius], brackets sign
    changes of x(0) - x0, and bisects each bracket (all brackets at once,
    one batched integration per bisection step).  Controls are reconstructed
    through the Hamiltonian minimizer.
    """
    grid = np.linspace(x0 - search_radius, x0 + search_radius, scan_points)
    endpoints, _ = backward_endpoint_map(sys, grid, t_f, dt_int)
    miss = endpoints - x0

    brackets = []
    for i in range(len(grid) - 1):
        a, b = miss[i], miss[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0.0:
            brackets.append((grid[i], grid[i]))
        elif a * b < 0.0:
            brackets.append((grid[i], grid[i + 1]))
    if np.isfinite(miss[-1]) and miss[-1] == 0.0:
        brackets.append((grid[-1], grid[-1]))

    if not brackets:
        return ShootingResult(found=False, roots=np.array([]), brackets=[])

    lo = np.array([b[0] for b in brackets])
    hi = np.array([b[1] for b in brackets])
    f_lo = np.interp(lo, grid, miss)
    for _ in range(100):
        width = hi - lo
        if np.all(width <= 1e-12 * (1.0 + np.abs(lo))):
            break
        mid = 0.5 * (lo + hi)
        f_mid, _ = backward_endpoint_map(sys, mid, t_f, dt_int)
        f_mid = f_mid - x0
        go_left = f_lo * f_mid <= 0.0
        hi = np.where(go_left, mid, hi)
        lo = np.where(go_left, lo, mid)
        f_lo = np.where(go_left, f_lo, f_mid)
    roots = 0.5 * (lo + hi)

    path = integrate_characteristics_backward(sys, float(roots[0]), t_f, dt_int)
    controls = controls_along(sys, path.states, path.costates)
    return ShootingResult(
        found=True,
        roots=roots,
        brackets=brackets,
        x_tf=float(roots[0]),
        times=path.times,
        states=path.states,
        costates=path.costates,
        controls=controls,
        boundary_error=float(abs(path.states[0] - x0)),
    )


@dataclass
class UniquenessReport:
    """The terminal-to-initial endpoint map over a grid, with monotonicity verdict.

    `monotone` is True when x(0) is strictly monotone in x_tf over the finite
    grid entries (hence at most one characteristic reaches any given x0);
    `violations` lists grid indices where the direction flips.  `crossings`
    counts sign changes of x(0) - x0.
    """

    x0: float
    x_tf: np.ndarray
    x0_reached: np.ndarray
    lam0: np.ndarray
    monotone: bool
    violations: list
    n_blowups: int
    crossings: int


def verify_uniqueness(
    sys: ScalarSystem,
    x0: float,
    t_f: float,
    terminal_grid: np.ndarray,
    dt_int: float = 1e-3,
) -> UniquenessReport:
    """Tabulate x_tf -> x(0) over a grid and check strict monotonicity.

    Non-monotonicity is reported, not raised: it is a finding about the
    instance.
    """
    grid = np.asarray(terminal_grid, dtype=float)
    x0_reached, lam0 = backward_endpoint_map(sys, grid, t_f, dt_int)

    finite = np.isfinite(x0_reached)
    vals = x0_reached[finite]
    diffs = np.diff(vals)
    increasing = bool(np.all(diffs > 0))
    decreasing = bool(np.all(diffs < 0))
    monotone = increasing or decreasing
    violations = []
    if not monotone and len(diffs) > 1:
        dominant = 1.0 if np.median(np.sign(diffs)) >= 0 else -1.0
        idx = np.flatnonzero(finite)
        violations = [int(idx[i + 1]) for i, d in enumerate(diffs) if d * dominant <= 0]

    miss = vals - x0
    crossings = int(np.sum(miss[:-1] * miss[1:] < 0) + np.sum(miss == 0.0))

    return UniquenessReport(
        x0=float(x0),
        x_tf=grid,
        x0_reached=x0_reached,
        lam0=lam0,
        monotone=monotone,
        violations=violations,
        n_blowups=int(np.sum(~finite)),
        crossings=crossings,
    )
