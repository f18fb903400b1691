"""Command-line front end: scenario runs, epsilon sweeps, limit-ODE
integrations, and scenario validation.

Commands
--------
run <file>            full PDE run with attached diagnostics
sweep <file> --epsilon e1,e2,...   concurrent runs across epsilon values
canonical <file> [--closure m] [--pde-dir d]   limit ODE only
check <file>          validate and print the assumption report

CONCENTRA_THREADS caps the sweep worker count.  Exit codes: 0 success,
2 validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import canonical as canon
from . import diagnostics as diag
from .grid import GridError, write_field_csv
from .models import (AssumptionConstants, ConstraintInfeasibleError,
                     GlobalInteractionModel, LocalCompetitionModel,
                     ModelError, check_assumptions)
from .pde import (ConfigError, SolverError, run_simulation, u0_peaks,
                  write_series_csv, write_trajectory_csv, read_trajectory_csv)
from .scenarios import Scenario, ScenarioError, load_scenario
from .wkb import DENSITY_FLOOR, WkbError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

NUMERICAL_ERRORS = (SolverError, WkbError, ModelError,
                    ConstraintInfeasibleError, FloatingPointError,
                    np.linalg.LinAlgError, canon.ClosureError, GridError)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _resolved_params(sc: Scenario, overrides=None) -> dict:
    cfg = dict(sc.raw["config"])
    cfg.setdefault("variant", "global")
    cfg.setdefault("snapshot_every", 0)
    cfg.setdefault("mass_target", 0.3)
    cfg.setdefault("picard", 0)
    if overrides:
        cfg.update(overrides)
    grid = sc.build_grid()
    resolved = {
        "scenario": sc.raw,
        "config": cfg,
        "domain": {"lower": list(grid.lower), "upper": list(grid.upper),
                   "points_per_axis": list(grid.points_per_axis)},
        "boundary_rule": "no-flux",
        "weight_note": "interaction weight psi taken identically 1 in all "
                       "bundled scenarios",
        "cg_rtol": 1e-10,
        "density_floor": DENSITY_FLOOR,
    }
    return resolved


def _artifact_dir(out_root, sc: Scenario, resolved: dict):
    digest = hashlib.sha256(
        json.dumps(_jsonable(resolved), sort_keys=True).encode()).hexdigest()
    path = os.path.join(out_root, f"{sc.name}_{digest[:8]}")
    os.makedirs(path, exist_ok=True)
    return path


class _U0Adapter:
    """value/hess view of a single initial bump, for assumption checks."""

    def __init__(self, bump):
        self.center = np.asarray(bump["center"], dtype=float)
        self.weights = np.asarray(bump["weights"], dtype=float)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return -((x - self.center) ** 2 * self.weights).sum(axis=-1)

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        h = np.diag(-2.0 * self.weights)
        return np.broadcast_to(h, x.shape + (len(self.weights),)).copy()


def _assumption_report(sc: Scenario, model, b):
    constants = sc.build_constants()
    u0 = _U0Adapter(sc.u0[0]) if len(sc.u0) == 1 else None
    rep = check_assumptions(model, constants, sc.domain(), b=b, u0=u0)
    return rep.to_dict()


def _canonical_run(sc: Scenario, model, closure_mode, pde_result=None,
                   feed=None, dt=None, T=None):
    """Integrate the limit ODE per the scenario's settings; returns
    (trajectory, reports dict)."""
    settings = sc.canonical_settings()
    mode = closure_mode or settings["closure"]
    dt = dt if dt is not None else settings["dt"]
    T = T if T is not None else settings["T"]
    x0, H0 = u0_peaks(sc.u0)[0]
    if mode == "from_pde":
        feed = feed if feed is not None else (
            pde_result.trajectory if pde_result is not None else None)
        if feed is None:
            raise ScenarioError("from_pde closure requires an attached PDE "
                                "run (or --pde-dir)")
        closure = canon.HessianClosure("from_pde", feed=feed)
    else:
        closure = canon.HessianClosure(mode, initial_hessian=H0)
    traj = canon.integrate_canonical(x0, closure, model, dt, T,
                                     domain=sc.domain())
    residuals, post = diag.constraint_residual(traj, model,
                                               t_layer=10 * dt)
    reports = {
        "closure": mode,
        "approximate_closure": mode == "riccati",
        "constraint_residual_max": float(np.max(residuals)),
        "monotonicity_violation_macro": diag.monotonicity_violation(traj.macro),
        "exit_time": traj.exit_time,
    }
    attractor, why = canon.long_time_attractor(model, sc.domain())
    if attractor is None:
        reports["attractor"] = {"found": False, "reason": why}
    else:
        x_inf, m_inf = attractor
        reports["attractor"] = {"found": True, "point": x_inf.tolist(),
                                "macro": float(m_inf),
                                "final_distance": float(
                                    np.linalg.norm(traj.points[-1] - x_inf))}
    if isinstance(model, LocalCompetitionModel):
        reports["persistence"] = canon.persistence_envelope(traj, model)
        ly = canon.lyapunov_local(traj, model)
        ly.pop("series", None)
        reports["lyapunov"] = ly
    return traj, residuals, reports


def _cmd_run(args) -> int:
    try:
        sc = load_scenario(args.scenario)
        model = sc.build_model()
        config = sc.build_config()
        grid = sc.build_grid()
        b = sc.build_diffusion()
        constants = sc.build_constants()
    except (ScenarioError, ConfigError, ModelError, OSError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    resolved = _resolved_params(sc)
    outdir = _artifact_dir(args.out, sc, resolved)
    try:
        result = run_simulation(config, model, grid, sc.u0,
                                probes=sc.probes, b=b, constants=constants)
        write_series_csv(result, os.path.join(outdir, "series.csv"))
        for step, snap in sorted(result.snapshots.items()):
            write_field_csv(snap, os.path.join(outdir, f"snap_{step:06d}.csv"))

        reports = {
            "assumptions": _assumption_report(sc, model, b),
            "regularity": result.regularity_reports,
            "probe_maxima": result.probe_maxima,
            "warnings": result.warnings,
            "advisories": result.advisories,
        }
        t_layer = 10 * config.dt
        _, post = diag.constraint_residual(result.trajectory, model,
                                           t_layer=t_layer)
        reports["constraint_residual_post_layer"] = post
        reports["I_monotonicity_violation"] = diag.monotonicity_violation(
            result.series.I)
        reports["I_total_variation"] = diag.total_variation(result.series.I)

        if isinstance(model, LocalCompetitionModel):
            reports["persistence"] = canon.persistence_envelope(
                result.trajectory, model)

        if "canonical" in sc.raw:
            traj, c_res, c_reports = _canonical_run(sc, model, None,
                                                    pde_result=result)
            write_trajectory_csv(traj, os.path.join(outdir, "trajectory.csv"),
                                 residuals=c_res)
            sup, _, _ = diag.compare_trajectories(result.trajectory, traj)
            c_reports["pde_vs_canonical_sup_distance"] = sup
            reports["canonical"] = c_reports

        if len(sc.u0) > 1 and result.probe_maxima:
            last = max(result.probe_maxima)
            peaks = result.probe_maxima[last]
            if len(peaks) >= 2:
                # peaks are value-sorted; mark the weaker one as dominated
                reports["dominated_bump"] = {"step": last,
                                             "point": peaks[-1][0],
                                             "peak_value": peaks[-1][1]}
            else:
                reports["dominated_bump"] = {"step": last,
                                             "note": "single peak survives"}

        manifest = dict(resolved)
        manifest["artifact_dir"] = os.path.basename(outdir)
        with open(os.path.join(outdir, "manifest.json"), "w") as f:
            json.dump(_jsonable(manifest), f, indent=2, sort_keys=True)
        with open(os.path.join(outdir, "reports.json"), "w") as f:
            json.dump(_jsonable(reports), f, indent=2, sort_keys=True)
    except NUMERICAL_ERRORS as exc:
        shutil.rmtree(outdir, ignore_errors=True)
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ScenarioError, ConfigError) as exc:
        shutil.rmtree(outdir, ignore_errors=True)
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(outdir)
    return EXIT_OK


def _worker_count(n_jobs: int) -> int:
    cap = os.environ.get("CONCENTRA_THREADS")
    if cap:
        try:
            cap = int(cap)
        except ValueError:
            raise ScenarioError(f"CONCENTRA_THREADS={cap!r} is not an integer")
        if cap < 1:
            raise ScenarioError("CONCENTRA_THREADS must be >= 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(n_jobs, cap))


def _sweep_one(sc: Scenario, eps: float, out_root: str):
    raw = json.loads(json.dumps(sc.raw))
    raw["config"]["epsilon"] = eps
    sc_eps = Scenario(raw)
    model = sc_eps.build_model()
    config = sc_eps.build_config()
    grid = sc_eps.build_grid()
    b = sc_eps.build_diffusion()
    resolved = _resolved_params(sc_eps)
    outdir = _artifact_dir(out_root, sc_eps, resolved)
    result = run_simulation(config, model, grid, sc_eps.u0,
                            probes=sc_eps.probes, b=b,
                            constants=sc_eps.build_constants())
    write_series_csv(result, os.path.join(outdir, "series.csv"))
    t_layer = 10 * config.dt
    _, post = diag.constraint_residual(result.trajectory, model,
                                       t_layer=t_layer)
    traj, c_res, _ = _canonical_run(sc_eps, model, "from_pde",
                                    pde_result=result,
                                    dt=config.dt, T=config.steps * config.dt)
    sup, _, _ = diag.compare_trajectories(result.trajectory, traj)
    mono = diag.monotonicity_violation(result.series.I)
    return {"epsilon": eps, "residual_post_layer": post, "sup_distance": sup,
            "monotonicity_violation": mono, "dir": outdir, "status": "ok"}


def _cmd_sweep(args) -> int:
    try:
        sc = load_scenario(args.scenario)
        values = []
        for tok in args.epsilon.split(","):
            tok = tok.strip()
            if not tok:
                continue
            eps = float(tok)
            if eps <= 0:
                raise ScenarioError(f"epsilon values must be positive: {tok}")
            if eps in values:
                print(f"warning: duplicate epsilon {eps} dropped",
                      file=sys.stderr)
            else:
                values.append(eps)
        if len(values) < 2:
            raise ScenarioError("sweep needs at least two distinct epsilon "
                                "values")
        workers = _worker_count(len(values))
    except (ScenarioError, ConfigError, ModelError, ValueError,
            OSError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    rows = []
    failed = False
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(_sweep_one, sc, e, args.out): e for e in values}
        for fut, eps in futures.items():
            try:
                rows.append(fut.result())
            except Exception as exc:   # per-row failure marker
                failed = True
                rows.append({"epsilon": eps, "residual_post_layer": "",
                             "sup_distance": "", "monotonicity_violation": "",
                             "dir": "", "status": f"failed: {exc}"})
    rows.sort(key=lambda r: -r["epsilon"])
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "sweep.csv")
    cols = ["epsilon", "residual_post_layer", "sup_distance",
            "monotonicity_violation", "dir", "status"]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for r in rows:
            f.write(",".join(
                f"{r[c]:.17g}" if isinstance(r[c], float) else str(r[c])
                for c in cols) + "\n")
    print(path)
    return EXIT_NUMERICAL if failed else EXIT_OK


def _cmd_canonical(args) -> int:
    try:
        sc = load_scenario(args.scenario)
        model = sc.build_model()
        mode = args.closure or sc.canonical_settings()["closure"]
        feed = None
        if mode == "from_pde":
            if not args.pde_dir:
                raise ScenarioError("from_pde closure requires --pde-dir")
            feed = read_trajectory_csv(os.path.join(args.pde_dir,
                                                    "series.csv"))
    except (ScenarioError, ConfigError, ModelError, OSError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    resolved = _resolved_params(sc, overrides={"canonical_only": True,
                                               "closure": mode})
    outdir = _artifact_dir(args.out, sc, resolved)
    try:
        traj, residuals, reports = _canonical_run(sc, model, mode, feed=feed)
        write_trajectory_csv(traj, os.path.join(outdir, "trajectory.csv"),
                             residuals=residuals)
        with open(os.path.join(outdir, "manifest.json"), "w") as f:
            json.dump(_jsonable(resolved), f, indent=2, sort_keys=True)
        with open(os.path.join(outdir, "reports.json"), "w") as f:
            json.dump(_jsonable(reports), f, indent=2, sort_keys=True)
    except NUMERICAL_ERRORS as exc:
        shutil.rmtree(outdir, ignore_errors=True)
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ScenarioError as exc:
        shutil.rmtree(outdir, ignore_errors=True)
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(outdir)
    return EXIT_OK


def _cmd_check(args) -> int:
    try:
        sc = load_scenario(args.scenario)
        model = sc.build_model()
        b = sc.build_diffusion()
        sc.build_config()
        sc.build_grid()
        report = _assumption_report(sc, model, b)
    except (ScenarioError, ConfigError, ModelError, OSError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(json.dumps(_jsonable({"scenario": sc.name, "valid": True,
                                "assumptions": report}), indent=2,
                     sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="concentra",
        description="Trait-space concentration dynamics: PDE runs and the "
                    "limiting canonical ODE")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario end to end")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default=".", help="artifact root directory")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a scenario across epsilons")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("--epsilon", required=True,
                         help="comma-separated epsilon values")
    p_sweep.add_argument("--out", default=".")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_can = sub.add_parser("canonical", help="integrate the limit ODE only")
    p_can.add_argument("scenario")
    p_can.add_argument("--closure",
                       choices=["from_pde", "frozen", "riccati"])
    p_can.add_argument("--pde-dir", help="artifact dir of a previous run "
                                         "(for the from_pde closure)")
    p_can.add_argument("--out", default=".")
    p_can.set_defaults(func=_cmd_canonical)

    p_check = sub.add_parser("check", help="validate a scenario and print "
                                           "the assumption report")
    p_check.add_argument("scenario")
    p_check.set_defaults(func=_cmd_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
