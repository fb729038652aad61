"""Command-line front end: solve / campaign / characteristics / scaling.

Configuration is a flat key/value text file with dotted section names
(`cost.Q = 100`, `ilqr.max_iterations = 500`); command-line flags override
file values.  Artifacts are written atomically (temp file + rename) and all
numbers are serialized with 17 significant digits, so re-running a command
with the same configuration reproduces byte-identical payloads (scaling
timings excepted, since they measure wall time).

Exit status: 0 on success, 1 when a campaign produced no converged start,
2 on configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys as _sys
import tempfile

import numpy as np

from . import characteristics as chars
from . import experiments as xp
from .ilqr import ILQRSettings
from .sqp import SQPSettings


class ConfigError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_value(t) for t in text.split(",")]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_file(path: str) -> dict:
    """Flat `key = value` lines; '#' starts a comment; dotted keys allowed."""
    values: dict = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not key or not val:
            raise ConfigError(f"{path}:{lineno}: empty key or value")
        values[key] = _parse_value(val)
    return values


_ILQR_FIELDS = {f.name for f in dataclasses.fields(ILQRSettings)}
_SQP_FIELDS = {f.name for f in dataclasses.fields(SQPSettings)}
_MODEL_FIELDS = {
    "rod_length", "mass", "gravity", "cart_mass", "pole_mass", "pole_length",
}
_SCALAR_FIELDS = {"linear", "sine", "gain", "q", "r", "s_f", "x0", "tf", "dt_int",
                  "grid_lo", "grid_hi", "grid_points", "search_radius"}


def build_experiment_config(values: dict) -> xp.ExperimentConfig:
    kwargs: dict = {}
    ilqr_kwargs: dict = {}
    sqp_kwargs: dict = {}
    model: dict = {}

    mapping = {
        "system": "system", "solver": "solver", "tf": "t_f", "starts": "n_starts",
        "seed": "seed", "sigma": "init_std", "workers": "workers",
        "cost.Q": "state_weight", "cost.R": "control_weight", "cost.Sf": "terminal_weight",
        "cluster.cost_rel_tol": "cluster_cost_rel_tol", "cluster.traj_tol": "cluster_traj_tol",
    }
    for key, val in values.items():
        if key in mapping:
            kwargs[mapping[key]] = val
        elif key == "dt":
            kwargs["dt_list"] = tuple(val) if isinstance(val, list) else (val,)
        elif key == "x0":
            kwargs["x0"] = tuple(val) if isinstance(val, list) else (val,)
        elif key.startswith("ilqr."):
            name = key[5:]
            if name not in _ILQR_FIELDS:
                raise ConfigError(f"unknown iLQR setting {name!r}")
            ilqr_kwargs[name] = val
        elif key.startswith("sqp."):
            name = key[4:]
            if name not in _SQP_FIELDS:
                raise ConfigError(f"unknown SQP setting {name!r}")
            sqp_kwargs[name] = val
        elif key.startswith("model."):
            name = key[6:]
            if name not in _MODEL_FIELDS:
                raise ConfigError(f"unknown model parameter {name!r}")
            model[name] = val
        elif key.startswith("scalar.") or key in ("out", "trace"):
            continue  # consumed elsewhere
        else:
            raise ConfigError(f"unknown configuration key {key!r}")

    if ilqr_kwargs:
        kwargs["ilqr_settings"] = ILQRSettings(**ilqr_kwargs)
    if sqp_kwargs:
        kwargs["sqp_settings"] = SQPSettings(**sqp_kwargs)
    if model:
        kwargs["model_params"] = tuple(sorted(model.items()))
    try:
        return xp.ExperimentConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_ready(obj):
    if isinstance(obj, float):
        return float(f"{obj:.17g}")
    if isinstance(obj, (np.floating,)):
        return float(f"{float(obj):.17g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    return obj


def _write_json(path: str, payload) -> None:
    _atomic_write(path, json.dumps(_json_ready(payload), indent=1, sort_keys=True) + "\n")


def _write_csv(path: str, header: list, rows: list) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _echo_config(out_dir: str, values: dict) -> None:
    lines = []
    for key in sorted(values):
        val = values[key]
        if isinstance(val, list):
            lines.append(f"{key} = {','.join(_fmt(v) for v in val)}")
        else:
            lines.append(f"{key} = {_fmt(val)}")
    _atomic_write(os.path.join(out_dir, "effective_config.txt"), "\n".join(lines) + "\n")


def _trajectory_dict(traj) -> dict:
    return {"dt": traj.dt, "states": traj.states, "controls": traj.controls}


def _result_dict(res) -> dict:
    return {
        "cost": res.cost,
        "iterations": res.iterations,
        "termination": res.termination.value,
        "stationarity_residual": res.stationarity_residual,
        "trajectory": _trajectory_dict(res.trajectory),
    }


def _cluster_set_dict(cs) -> dict:
    return {
        "n_starts": cs.n_starts,
        "failures": [{"start": i, "termination": t} for i, t in cs.failures],
        "clusters": [
            {
                "cost": c.cost,
                "mean_cost": c.mean_cost,
                "members": c.member_seeds,
                "member_costs": c.member_costs,
                "member_residuals": c.member_residuals,
                "representative": _trajectory_dict(c.representative),
            }
            for c in cs.clusters
        ],
    }


def _write_traces(out_dir: str, run_id: str, trace: list) -> None:
    if not trace:
        return
    header = sorted(trace[0].keys())
    rows = [[row[h] for h in header] for row in trace]
    _write_csv(os.path.join(out_dir, "trace", f"{run_id}.csv"), header, rows)


def _cmd_solve(values: dict, out_dir: str, want_trace: bool) -> int:
    config = build_experiment_config(values)
    solver = config.solver if config.solver != "both" else "ilqr"
    dt = config.dt_list[0]
    res = xp.run_single_start(config, solver, dt, start_index=0)
    _echo_config(out_dir, values)
    _write_json(os.path.join(out_dir, "result.json"), _result_dict(res))
    if want_trace:
        _write_traces(out_dir, f"{config.system}_{solver}_dt{dt:g}_s000", res.trace)
    print(f"{solver} on {config.system} dt={dt:g}: J={res.cost:.6e} "
          f"({res.termination.value}, {res.iterations} iterations)")
    return 0


def _cmd_campaign(values: dict, out_dir: str, want_trace: bool) -> int:
    config = build_experiment_config(values)
    solvers = ("ilqr", "sqp") if config.solver == "both" else (config.solver,)

    payload: dict = {}
    summary_rows = []
    any_converged = False
    for solver in solvers:
        payload[solver] = {}
        for dt in config.dt_list:
            cs = xp.run_multistart(config, dt, solver)
            payload[solver][f"{dt:.17g}"] = _cluster_set_dict(cs)
            for ci, cl in enumerate(cs.clusters):
                any_converged = True
                summary_rows.append(
                    [dt, solver, ci, cl.cost, cl.size, max(cl.member_residuals)]
                )
            print(f"{solver} dt={dt:g}: {len(cs.clusters)} cluster(s), "
                  f"{len(cs.failures)} failure(s); costs "
                  + ", ".join(f"{c:.6e}" for c in cs.costs))

    _echo_config(out_dir, values)
    _write_json(os.path.join(out_dir, "clusters.json"), payload)
    _write_csv(
        os.path.join(out_dir, "summary.csv"),
        ["dt", "solver", "cluster_id", "cost", "members", "residual"],
        summary_rows,
    )
    return 0 if any_converged else 1


def _cmd_characteristics(values: dict, out_dir: str) -> int:
    opts = {k[7:]: v for k, v in values.items() if k.startswith("scalar.")}
    unknown = set(opts) - _SCALAR_FIELDS
    if unknown:
        raise ConfigError(f"unknown scalar system keys {sorted(unknown)}")
    system = chars.custom_scalar_system(
        linear=float(opts.get("linear", 0.0)), sine=float(opts.get("sine", 1.0)),
        gain=float(opts.get("gain", 1.0)), q=float(opts.get("q", 1.0)),
        r=float(opts.get("r", 5.0)), s_f=float(opts.get("s_f", 0.0)),
    )
    x0 = float(opts.get("x0", 1.0))
    t_f = float(opts.get("tf", 2.0))
    dt_int = float(opts.get("dt_int", 1e-3))
    grid = np.linspace(
        float(opts.get("grid_lo", -2.0 * np.pi)), float(opts.get("grid_hi", 2.0 * np.pi)),
        int(opts.get("grid_points", 101)),
    )

    report = chars.verify_uniqueness(system, x0, t_f, grid, dt_int)
    shot = chars.solve_tpbvp_shooting(
        system, x0, t_f, dt_int, search_radius=float(opts.get("search_radius", 10.0))
    )

    _echo_config(out_dir, values)
    rows = [
        [report.x_tf[i], report.x0_reached[i], report.lam0[i]] for i in range(len(report.x_tf))
    ]
    _write_csv(os.path.join(out_dir, "characteristics.csv"), ["x_tf", "x0", "lambda0"], rows)
    summary = (
        f"monotone: {'yes' if report.monotone else 'no'}\n"
        f"brackets found: {len(shot.brackets)}\n"
        f"roots: {','.join(_fmt(float(r)) for r in shot.roots)}\n"
        f"boundary_error: {_fmt(shot.boundary_error) if shot.found else 'n/a'}\n"
    )
    _atomic_write(os.path.join(out_dir, "summary.txt"), summary)
    print(summary.strip())
    return 0


def _cmd_scaling(values: dict, out_dir: str) -> int:
    config = build_experiment_config(values)
    solvers = ("ilqr", "sqp") if config.solver == "both" else (config.solver,)
    n_lists = {"ilqr": [100, 200, 400, 800, 1600], "sqp": [50, 100, 200, 400]}

    rows = []
    slopes = {}
    for solver in solvers:
        report = xp.measure_scaling(config, solver, n_lists[solver])
        slopes[solver] = report.slope
        for N, sec in zip(report.N_list, report.median_seconds):
            rows.append([solver, N, sec])
        print(f"{solver}: slope {report.slope:.3f} over N={report.N_list}")

    _echo_config(out_dir, values)
    _write_csv(os.path.join(out_dir, "timing.csv"), ["solver", "N", "median_seconds"], rows)
    _write_json(os.path.join(out_dir, "scaling.json"), {"slopes": slopes})
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="octrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "campaign", "characteristics", "scaling"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key/value configuration file")
        p.add_argument("--system", default=None)
        p.add_argument("--solver", default=None)
        p.add_argument("--dt", action="append", type=float, default=None)
        p.add_argument("--tf", type=float, default=None)
        p.add_argument("--starts", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--sigma", type=float, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--trace", action="store_true")
        p.add_argument("--out", default="runs/out")
    return parser


def run(argv: list) -> int:
    """Entry point; returns the process exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    values: dict = {}
    try:
        if args.config:
            values = parse_config_file(args.config)
        for flag in ("system", "solver", "tf", "starts", "seed", "sigma", "workers"):
            val = getattr(args, flag)
            if val is not None:
                values[flag] = val
        if args.dt is not None:
            values["dt"] = args.dt if len(args.dt) > 1 else args.dt[0]
        if "workers" not in values and os.environ.get("OCTRL_WORKERS"):
            values["workers"] = int(os.environ["OCTRL_WORKERS"])

        out_dir = args.out
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "solve":
            return _cmd_solve(values, out_dir, args.trace)
        if args.command == "campaign":
            return _cmd_campaign(values, out_dir, args.trace)
        if args.command == "characteristics":
            return _cmd_characteristics(values, out_dir)
        return _cmd_scaling(values, out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=_sys.stderr)
        return 2
    except ValueError as exc:
        print(f"configuration error: {exc}", file=_sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(run(_sys.argv[1:]))


if __name__ == "__main__":
    main()
