"""Multi-start campaigns, solution clustering, and complexity measurement.

A campaign runs one (system, solver, dt) instance from many random Gaussian
initial guesses, clusters the converged solutions by cost and control
proximity, and reports the distinct local minima found.  Sweeping dt exposes
how coarse Euler discretization manufactures extra minima for the direct
solver while the indirect solver keeps finding a single one.
"""

from __future__ import annotations

import concurrent.futures
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import ilqr, sqp
from .cost import QuadraticCost, total_cost
from .dynamics import CartpoleModel, ControlAffineSystem, PendulumModel, Trajectory, rollout
from .ilqr import ILQRSettings
from .results import SolverResult, Termination
from .sqp import SQPSettings

SYSTEMS = ("pendulum", "cartpole")
SOLVERS = ("ilqr", "sqp", "both")

_DEFAULT_X0 = {
    "pendulum": (np.pi, 0.0),
    "cartpole": (0.0, 0.0, np.pi, 0.0),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a campaign bit for bit."""

    system: str = "cartpole"
    solver: str = "both"
    dt_list: tuple = (0.2, 0.1, 0.05, 0.01)
    t_f: float = 3.0
    x0: tuple | None = None  # default: swing-up from hanging
    n_starts: int = 32
    seed: int = 0
    init_std: float = 1.0
    state_weight: float = 100.0
    control_weight: float = 10.0
    terminal_weight: float = 1000.0
    ilqr_settings: ILQRSettings = field(default_factory=ILQRSettings)
    sqp_settings: SQPSettings = field(default_factory=SQPSettings)
    cluster_cost_rel_tol: float = 1e-3
    cluster_traj_tol: float = 1e-2
    workers: int = 1
    model_params: tuple = ()  # ((name, value), ...) overrides for the model

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ValueError(f"unknown system {self.system!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        for dt in self.dt_list:
            horizon_steps(self.t_f, dt)  # raises if t_f/dt is not integral


def horizon_steps(t_f: float, dt: float) -> int:
    """N = t_f / dt, required to be integral."""
    ratio = t_f / dt
    N = int(round(ratio))
    if N < 1 or abs(ratio - N) > 1e-9 * ratio:
        raise ValueError(f"t_f/dt = {ratio} is not a positive integer")
    return N


def build_system(config: ExperimentConfig) -> ControlAffineSystem:
    params = dict(config.model_params)
    if config.system == "pendulum":
        return PendulumModel(**params)
    return CartpoleModel(**params)


def build_cost(config: ExperimentConfig, sys: ControlAffineSystem) -> QuadraticCost:
    return QuadraticCost(
        Q=config.state_weight,
        R=config.control_weight,
        S_f=config.terminal_weight,
        state_dim=sys.state_dim,
        control_dim=sys.control_dim,
    )


def initial_state(config: ExperimentConfig, sys: ControlAffineSystem) -> np.ndarray:
    x0 = config.x0 if config.x0 is not None else _DEFAULT_X0[config.system]
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.state_dim,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({sys.state_dim},)")
    return x0


def _start_rng(seed: int, start_index: int) -> np.random.Generator:
    # per-start stream derived from (campaign seed, start index)
    return np.random.default_rng(np.random.SeedSequence((seed, start_index)))


def run_single_start(config: ExperimentConfig, solver: str, dt: float, start_index: int) -> SolverResult:
    """One solve with the deterministic Gaussian guess for this start index."""
    sys = build_system(config)
    cost = build_cost(config, sys)
    x0 = initial_state(config, sys)
    N = horizon_steps(config.t_f, dt)
    rng = _start_rng(config.seed, start_index)

    if solver == "ilqr":
        u_init = rng.normal(0.0, config.init_std, (N, sys.control_dim))
        return ilqr.solve(sys, cost, x0, u_init, dt, config.ilqr_settings)
    x_init = rng.normal(0.0, config.init_std, (N + 1, sys.state_dim))
    x_init[0] = x0
    u_init = rng.normal(0.0, config.init_std, (N, sys.control_dim))
    return sqp.solve(sys, cost, x0, x_init, u_init, dt, config.sqp_settings)


@dataclass
class SolutionCluster:
    """One distinct local minimum: its best member and bookkeeping."""

    representative: Trajectory
    cost: float  # representative (lowest) cost
    mean_cost: float
    member_seeds: list  # start indices, ascending
    member_costs: list
    member_residuals: list

    @property
    def size(self) -> int:
        return len(self.member_seeds)


@dataclass
class SolutionClusterSet:
    """Clusters sorted by cost ascending, plus the starts that did not converge."""

    clusters: list
    failures: list  # (start_index, termination value) pairs
    n_starts: int

    @property
    def costs(self) -> list:
        return [c.cost for c in self.clusters]

    def best_cost(self) -> float:
        if not self.clusters:
            return float("nan")
        return self.clusters[0].cost


def _same_solution(
    cost_a: float, controls_a: np.ndarray, cost_b: float, controls_b: np.ndarray,
    cost_rel_tol: float, traj_tol: float,
) -> bool:
    close_cost = abs(cost_a - cost_b) <= cost_rel_tol * (1.0 + min(cost_a, cost_b))
    rms_dist = float(np.sqrt(np.mean((controls_a - controls_b) ** 2)))
    rms_mag = min(
        float(np.sqrt(np.mean(controls_a**2))), float(np.sqrt(np.mean(controls_b**2)))
    )
    return close_cost and rms_dist <= traj_tol * (1.0 + rms_mag)


def cluster_solutions(
    results: list,
    cost_rel_tol: float = 1e-3,
    traj_tol: float = 1e-2,
    n_starts: int | None = None,
) -> SolutionClusterSet:
    """Greedy clustering of (start_index, SolverResult) pairs.

    Two converged runs land in the same cluster iff their costs agree to
    cost_rel_tol (relative to the smaller) and their control trajectories
    agree to traj_tol in relative RMS.  The representative is the
    lowest-cost member.  Non-converged runs are excluded from clustering
    but reported.
    """
    failures = [
        (idx, res.termination.value) for idx, res in results if not res.converged
    ]
    converged = sorted(
        ((idx, res) for idx, res in results if res.converged), key=lambda t: t[1].cost
    )

    clusters: list[SolutionCluster] = []
    for idx, res in converged:
        placed = False
        for cl in clusters:
            if _same_solution(
                cl.cost, cl.representative.controls, res.cost, res.trajectory.controls,
                cost_rel_tol, traj_tol,
            ):
                cl.member_seeds.append(idx)
                cl.member_costs.append(res.cost)
                cl.member_residuals.append(res.stationarity_residual)
                placed = True
                break
        if not placed:
            clusters.append(
                SolutionCluster(
                    representative=res.trajectory,
                    cost=res.cost,
                    mean_cost=res.cost,
                    member_seeds=[idx],
                    member_costs=[res.cost],
                    member_residuals=[res.stationarity_residual],
                )
            )
    for cl in clusters:
        order = np.argsort(cl.member_seeds)
        cl.member_seeds = [cl.member_seeds[i] for i in order]
        cl.member_costs = [cl.member_costs[i] for i in order]
        cl.member_residuals = [cl.member_residuals[i] for i in order]
        cl.mean_cost = float(np.mean(cl.member_costs))

    total = n_starts if n_starts is not None else len(results)
    return SolutionClusterSet(clusters=clusters, failures=sorted(failures), n_starts=total)


def _solve_start_task(args) -> tuple:
    config, solver, dt, index = args
    return index, run_single_start(config, solver, dt, index)


def run_multistart(config: ExperimentConfig, dt: float, solver: str | None = None) -> SolutionClusterSet:
    """Run n_starts solves at one dt and cluster the converged solutions.

    Deterministic given the config: per-start seeds derive from
    (config.seed, start index) and parallel results are merged by index.
    """
    solver = solver or config.solver
    if solver == "both":
        raise ValueError("run_multistart needs a single solver; use cross_check for both")
    tasks = [(config, solver, dt, i) for i in range(config.n_starts)]

    if config.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = sorted(pool.map(_solve_start_task, tasks), key=lambda t: t[0])
    else:
        results = [_solve_start_task(t) for t in tasks]

    return cluster_solutions(
        results, config.cluster_cost_rel_tol, config.cluster_traj_tol, config.n_starts
    )


def run_sweep(config: ExperimentConfig, solver: str | None = None) -> dict:
    """run_multistart at every dt in the config; returns {dt: SolutionClusterSet}."""
    return {dt: run_multistart(config, dt, solver) for dt in config.dt_list}


@dataclass
class TrapCheck:
    """iLQR started at one SQP cluster representative: did it stay there?"""

    cluster_index: int
    cluster_cost: float
    ilqr_cost: float
    cost_rel_change: float
    stationarity_residual: float
    stuck: bool


@dataclass
class CrossCheckEntry:
    dt: float
    ilqr_clusters: SolutionClusterSet
    sqp_clusters: SolutionClusterSet
    ilqr_best_cost: float
    sqp_best_cost: float
    rel_gap: float
    traps: list


@dataclass
class CrossCheckReport:
    entries: list

    def entry(self, dt: float) -> CrossCheckEntry:
        for e in self.entries:
            if e.dt == dt:
                return e
        raise KeyError(dt)


def replay_at_cluster(config: ExperimentConfig, dt: float, representative: Trajectory) -> SolverResult:
    """Run iLQR initialized at a cluster representative's controls."""
    sys = build_system(config)
    cost = build_cost(config, sys)
    x0 = initial_state(config, sys)
    return ilqr.solve(sys, cost, x0, representative.controls, dt, config.ilqr_settings)


def cross_check(config: ExperimentConfig, trap_tol: float = 1e-4) -> CrossCheckReport:
    """Run both solvers over the dt sweep and compare their minima.

    Per dt: cluster sets for each solver, the relative gap between the iLQR
    cost and the best SQP cluster, and a stationarity trap check (iLQR
    initialized at each SQP representative should stay put, since those are
    first-order stationary points of the same discretized problem).
    """
    entries = []
    for dt in config.dt_list:
        ilqr_set = run_multistart(config, dt, "ilqr")
        sqp_set = run_multistart(config, dt, "sqp")
        ji = ilqr_set.best_cost()
        js = sqp_set.best_cost()
        gap = abs(ji - js) / max(min(ji, js), np.finfo(float).tiny)

        traps = []
        for ci, cl in enumerate(sqp_set.clusters):
            res = replay_at_cluster(config, dt, cl.representative)
            rel_change = abs(res.cost - cl.cost) / max(cl.cost, np.finfo(float).tiny)
            traps.append(
                TrapCheck(
                    cluster_index=ci,
                    cluster_cost=cl.cost,
                    ilqr_cost=res.cost,
                    cost_rel_change=rel_change,
                    stationarity_residual=res.stationarity_residual,
                    stuck=bool(rel_change <= trap_tol and res.stationarity_residual <= trap_tol),
                )
            )
        entries.append(
            CrossCheckEntry(
                dt=dt, ilqr_clusters=ilqr_set, sqp_clusters=sqp_set,
                ilqr_best_cost=ji, sqp_best_cost=js, rel_gap=gap, traps=traps,
            )
        )
    return CrossCheckReport(entries=entries)


@dataclass
class ScalingReport:
    label: str
    N_list: list
    median_seconds: list
    slope: float


def fit_loglog_slope(N_list, seconds) -> float:
    return float(np.polyfit(np.log(np.asarray(N_list, float)), np.log(np.asarray(seconds, float)), 1)[0])


def measure_scaling(
    config: ExperimentConfig,
    solver,
    N_list,
    repetitions: int = 5,
    dt: float = 0.01,
) -> ScalingReport:
    """Median per-iteration wall time vs horizon N, with the log-log slope.

    `solver` is "ilqr" (one backward+forward pass is timed), "sqp" (one
    dense KKT solve is timed), or a callable N -> None timed directly (a
    control case).  Problem construction is excluded from the timings.
    """
    sys = build_system(config)
    cost = build_cost(config, sys)
    x0 = initial_state(config, sys)

    medians = []
    for N in N_list:
        reps = []
        if callable(solver):
            for _ in range(repetitions):
                t0 = time.perf_counter()
                solver(N)
                reps.append(time.perf_counter() - t0)
        elif solver == "ilqr":
            traj = rollout(sys, x0, np.zeros((N, sys.control_dim)), dt)
            from .dynamics import linearize_trajectory
            from .cost import quadratize

            lin = linearize_trajectory(sys, traj)
            quad = quadratize(cost, traj)
            for _ in range(repetitions):
                t0 = time.perf_counter()
                bp = ilqr.backward_pass(traj, lin, quad, 0.0)
                ilqr.forward_pass(sys, cost, traj, bp, 0.0)
                reps.append(time.perf_counter() - t0)
        elif solver == "sqp":
            traj = rollout(sys, x0, np.zeros((N, sys.control_dim)), dt)
            qp = sqp.build_qp(sys, cost, traj)
            for _ in range(repetitions):
                t0 = time.perf_counter()
                sqp.solve_eq_qp(qp)
                reps.append(time.perf_counter() - t0)
        else:
            raise ValueError(f"unknown solver {solver!r}")
        medians.append(float(np.median(reps)))

    label = solver if isinstance(solver, str) else getattr(solver, "__name__", "custom")
    return ScalingReport(
        label=label, N_list=list(N_list), median_seconds=medians,
        slope=fit_loglog_slope(N_list, medians),
    )


def with_overrides(config: ExperimentConfig, **kwargs) -> ExperimentConfig:
    """Functional update helper (configs are frozen)."""
    return replace(config, **kwargs)
