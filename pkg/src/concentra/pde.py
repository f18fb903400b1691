"""IMEX time integration of the small-mutation population models.

Splitting per step: the stiff reaction term is applied explicitly through an
exponential (positivity-preserving, exact for frozen rates), then diffusion
implicitly via a matrix-free conjugate-gradient solve of
(Id - eps dt L) n_new = n_star.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .canonical import ConcentrationTrajectory
from .diagnostics import MacroSeries
from .grid import (DensityField, TraitGrid, boundary_ring_mass,
                   convolve_kernel, div_b_grad_values, face_coefficients,
                   laplacian_values)
from .models import (AssumptionConstants, DiffusionCoefficient,
                     GlobalInteractionModel, LocalCompetitionModel)
from .wkb import (WkbError, hessian_at, locate_max, regularity_monitor,
                  to_wkb)

CG_RTOL = 1e-10
NEGATIVE_CLAMP = 1e-10   # relative tolerance for CG round-off below zero
BOUNDARY_MASS_FRACTION = 1e-8

VARIANTS = ("global", "local", "variable_diffusion")


class ConfigError(ValueError):
    """Invalid simulation configuration."""


class DegenerateInitializationError(ConfigError):
    """Initial density underflowed to zero everywhere."""


class SolverError(RuntimeError):
    """The implicit diffusion solve failed."""


@dataclass
class SimulationConfig:
    epsilon: float
    dt: float
    steps: int
    model_variant: str = "global"
    snapshot_every: int = 0
    mass_target: float = 0.3
    picard: int = 0          # extra fixed-point sweeps of the reaction coupling

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.steps < 0:
            raise ConfigError(f"steps must be nonnegative, got {self.steps}")
        if self.model_variant not in VARIANTS:
            raise ConfigError(f"model_variant must be one of {VARIANTS}, "
                              f"got {self.model_variant!r}")
        if self.mass_target <= 0:
            raise ConfigError(f"mass_target must be positive, "
                              f"got {self.mass_target}")


@dataclass
class SimulationState:
    time: float
    density: DensityField
    macro: object = None     # scalar I (global) or competition field (local)


# --- initial data -----------------------------------------------------------

def _bump_exponent(nodes, bump):
    center = np.asarray(bump["center"], dtype=float)
    weights = np.asarray(bump["weights"], dtype=float)
    return -((nodes - center) ** 2 * weights).sum(axis=-1)


def init_density(grid: TraitGrid, u0_spec, epsilon: float,
                 mass_target: float) -> DensityField:
    """Sum of concave quadratic bumps exp(q_k/eps), scaled so the total mass
    in the box equals mass_target exactly (one scalar division)."""
    if mass_target <= 0:
        raise ConfigError(f"mass_target must be positive, got {mass_target}")
    if not u0_spec:
        raise ConfigError("u0_spec must list at least one bump")
    nodes = grid.nodes()
    raw = np.zeros(grid.shape)
    for bump in u0_spec:
        raw += np.exp(_bump_exponent(nodes, bump) / epsilon)
    total = raw.sum() * grid.cell_volume
    if total == 0.0:
        raise DegenerateInitializationError(
            "initial density underflowed everywhere; bumps too narrow for "
            "this grid/epsilon")
    return DensityField(grid, raw * (mass_target / total))


def u0_peaks(u0_spec):
    """Analytic (center, Hessian) of each initial bump of the log density."""
    out = []
    for bump in u0_spec:
        center = np.atleast_1d(np.asarray(bump["center"], dtype=float))
        weights = np.atleast_1d(np.asarray(bump["weights"], dtype=float))
        out.append((center, np.diag(-2.0 * weights)))
    return out


# --- the IMEX engine ----------------------------------------------------------

class ImexIntegrator:
    """One-step integrator with cached stencil data and warm-started CG."""

    def __init__(self, grid: TraitGrid, model, config: SimulationConfig,
                 b: DiffusionCoefficient = None):
        self.grid = grid
        self.model = model
        self.config = config
        self.nodes = grid.nodes()
        self.advisories = []
        self._prev = None

        variant = config.model_variant
        if variant == "local":
            if not isinstance(model, LocalCompetitionModel):
                raise ConfigError("local variant requires a local-competition "
                                  "model")
            self._r_nodes = np.asarray(model.intrinsic.value(self.nodes),
                                       dtype=float)
        else:
            if not isinstance(model, GlobalInteractionModel):
                raise ConfigError(f"{variant} variant requires a "
                                  "global-interaction model")
            self._psi = np.asarray(model.weight(self.nodes), dtype=float)

        if variant == "variable_diffusion":
            if b is None:
                raise ConfigError("variable_diffusion variant requires a "
                                  "diffusion coefficient")
            b_nodes = np.asarray(b.value(self.nodes), dtype=float)
            if np.any(b_nodes <= 0):
                raise ConfigError("diffusion coefficient must be positive "
                                  "on the grid")
            self._faces = face_coefficients(grid, b_nodes)
        else:
            self._faces = None

        n = grid.num_nodes
        shape = grid.shape
        spacing = grid.spacing
        coef = config.epsilon * config.dt
        faces = self._faces

        def matvec(v):
            f = v.reshape(shape)
            if faces is None:
                lap = laplacian_values(f, spacing)
            else:
                lap = div_b_grad_values(f, faces, spacing)
            return (f - coef * lap).reshape(-1)

        self._operator = LinearOperator((n, n), matvec=matvec, dtype=float)

    def macro_of(self, density: DensityField):
        """Macro coupling computed from a density: scalar I (global) or the
        competition field (local)."""
        if self.config.model_variant == "local":
            return convolve_kernel(density, self.model.kernel)
        return float((self._psi * density.values).sum()
                     * self.grid.cell_volume)

    def rate_field(self, density: DensityField, macro=None):
        """(R values on nodes, macro used)."""
        if macro is None:
            macro = self.macro_of(density)
        if self.config.model_variant == "local":
            return self._r_nodes - macro.values, macro
        return (np.asarray(self.model.rate(self.nodes, macro), dtype=float),
                macro)

    def step(self, state: SimulationState) -> SimulationState:
        cfg = self.config
        n = state.density.values
        rate, macro = self.rate_field(state.density, state.macro)
        for _ in range(cfg.picard):
            n_try = n * np.exp(cfg.dt * rate / cfg.epsilon)
            rate, macro = self.rate_field(DensityField(self.grid, n_try))

        advisory = cfg.dt * float(np.abs(rate).max()) / cfg.epsilon
        if advisory > 1.0 and not self.advisories:
            self.advisories.append(
                f"dt*sup|R|/eps = {advisory:.3g} > 1: explicit reaction "
                "update may be inaccurate")

        n_star = n * np.exp(cfg.dt * rate / cfg.epsilon)
        rhs = n_star.reshape(-1)
        x0 = self._prev if self._prev is not None else rhs
        sol, info = cg(self._operator, rhs, x0=x0, rtol=CG_RTOL, atol=0.0,
                       maxiter=2000)
        if info != 0:
            res = np.linalg.norm(self._operator @ sol - rhs)
            raise SolverError(f"diffusion solve did not converge "
                              f"(info={info}, residual={res:.3e})")
        self._prev = sol
        peak = float(sol.max())
        low = float(sol.min())
        if low < -NEGATIVE_CLAMP * max(peak, 1.0):
            raise SolverError(f"diffusion solve produced negative density "
                              f"{low:.3e} (peak {peak:.3e})")
        density = DensityField(self.grid, np.maximum(sol, 0.0))
        return SimulationState(state.time + cfg.dt, density, None)


def imex_step_global(state: SimulationState, model: GlobalInteractionModel,
                     config: SimulationConfig) -> SimulationState:
    return ImexIntegrator(state.density.grid, model, config).step(state)


def imex_step_local(state: SimulationState, model: LocalCompetitionModel,
                    config: SimulationConfig) -> SimulationState:
    return ImexIntegrator(state.density.grid, model, config).step(state)


def imex_step_vardiff(state: SimulationState, model: GlobalInteractionModel,
                      b: DiffusionCoefficient,
                      config: SimulationConfig) -> SimulationState:
    return ImexIntegrator(state.density.grid, model, config, b=b).step(state)


# --- full runs ----------------------------------------------------------------

@dataclass
class RunResult:
    series: MacroSeries
    snapshots: dict
    trajectory: ConcentrationTrajectory
    residuals: np.ndarray
    regularity_reports: list
    probe_maxima: dict
    warnings: list
    advisories: list

    def __iter__(self):
        return iter((self.series, self.snapshots, self.trajectory))


def run_simulation(config: SimulationConfig, model, grid: TraitGrid, u0_spec,
                   probes=None, b: DiffusionCoefficient = None,
                   constants: AssumptionConstants = None) -> RunResult:
    """Step the chosen variant, recording macro observables and the tracked
    peak every step, snapshots every snapshot_every steps, and regularity
    reports at the probe steps."""
    engine = ImexIntegrator(grid, model, config, b=b)
    density = init_density(grid, u0_spec, config.epsilon, config.mass_target)
    state = SimulationState(0.0, density, None)
    probes = sorted(set(int(p) for p in (probes or [])))
    multi = len(u0_spec) > 1
    consts = constants if constants is not None else AssumptionConstants()

    times, Is, rhos, Js, bms = [], [], [], [], []
    pts, hessians, macros, residuals = [], [], [], []
    snapshots, reports, probe_maxima = {}, [], {}
    run_warnings = []

    vol = grid.cell_volume

    def record(step_index):
        n = state.density
        rate, macro = engine.rate_field(n, state.macro)
        state.macro = macro
        if config.model_variant == "local":
            i_val = float(n.values.sum() * vol)
            psi_rn = rate * n.values
        else:
            i_val = macro
            psi_rn = engine._psi * rate * n.values
        rho = float(n.values.sum() * vol)
        j_val = float(psi_rn.sum() * vol) / config.epsilon
        bm = boundary_ring_mass(n)
        if bm > BOUNDARY_MASS_FRACTION * rho and not run_warnings:
            run_warnings.append(
                f"boundary ring mass {bm:.3e} exceeds {BOUNDARY_MASS_FRACTION:g}"
                f" of total mass at step {step_index}; box truncation is "
                "affecting the run")

        u = to_wkb(n, config.epsilon)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            peaks = locate_max(u, multi=multi)
        for w in caught:
            msg = f"step {step_index}: {w.message}"
            if msg not in run_warnings:
                run_warnings.append(msg)
        x_bar, _ = peaks[0]
        d = grid.dimension
        try:
            H = hessian_at(u, x_bar)
        except WkbError:
            H = np.full((d, d), np.nan)
        if config.model_variant == "local":
            res = abs(float(model.intrinsic.value(x_bar))
                      - float(macro.values[grid.nearest_index(x_bar)]))
            macro_scalar = rho
        else:
            res = abs(float(model.rate(x_bar, macro)))
            macro_scalar = macro

        times.append(state.time)
        Is.append(i_val)
        rhos.append(rho)
        Js.append(j_val)
        bms.append(bm)
        pts.append(np.asarray(x_bar, dtype=float))
        hessians.append(H)
        macros.append(macro_scalar)
        residuals.append(res)

        if config.snapshot_every and step_index % config.snapshot_every == 0:
            snapshots[step_index] = n
        if step_index in probes:
            probe_maxima[step_index] = [(p.tolist(), v) for p, v in peaks]
            rep = regularity_monitor(u, consts, time=state.time)
            rep["step"] = step_index
            reports.append(rep)

    record(0)
    for k in range(1, config.steps + 1):
        state = engine.step(state)
        record(k)

    series = MacroSeries(np.array(times), np.array(Is), np.array(rhos),
                         np.array(Js), np.array(bms))
    traj = ConcentrationTrajectory(np.array(times), np.array(pts),
                                   np.array(macros), np.array(hessians),
                                   source="pde")
    return RunResult(series, snapshots, traj, np.array(residuals), reports,
                     probe_maxima, run_warnings, list(engine.advisories))


# --- series CSV ---------------------------------------------------------------

def _series_columns(dimension):
    cols = ["t", "I", "rho", "J"]
    cols += [f"xbar_{j + 1}" for j in range(dimension)]
    if dimension == 1:
        cols += ["H_11"]
    else:
        cols += ["H_11", "H_12", "H_22"]
    cols += ["residual_R", "boundary_mass"]
    return cols


def _hess_entries(H, dimension):
    if dimension == 1:
        return [H[0, 0]]
    return [H[0, 0], H[0, 1], H[1, 1]]


def write_series_csv(result: RunResult, path) -> None:
    """Per-step observables, one row per time step, 17 significant digits."""
    s = result.series
    traj = result.trajectory
    d = traj.points.shape[1]
    with open(path, "w") as f:
        f.write(",".join(_series_columns(d)) + "\n")
        for k in range(len(s.times)):
            row = [s.times[k], s.I[k], s.rho[k], s.J[k]]
            row += list(traj.points[k])
            row += _hess_entries(traj.hessians[k], d)
            row += [result.residuals[k], s.boundary_mass[k]]
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_trajectory_csv(traj: ConcentrationTrajectory, path,
                         residuals=None) -> None:
    """Canonical-trajectory CSV: the series schema plus a leading source
    column; fields with no ODE counterpart (J, boundary_mass) are nan."""
    d = traj.points.shape[1]
    with open(path, "w") as f:
        f.write("source," + ",".join(_series_columns(d)) + "\n")
        for k in range(len(traj.times)):
            row = [traj.times[k], traj.macro[k], traj.macro[k], float("nan")]
            row += list(traj.points[k])
            row += _hess_entries(traj.hessians[k], d)
            res = residuals[k] if residuals is not None else float("nan")
            row += [res, float("nan")]
            f.write(traj.source + "," + ",".join(f"{v:.17g}" for v in row)
                    + "\n")


def read_trajectory_csv(path) -> ConcentrationTrajectory:
    """Rebuild a trajectory (times, points, macro, Hessians) from a series or
    trajectory CSV."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        rows = [line.strip().split(",") for line in f if line.strip()]
    offset = 1 if header[0] == "source" else 0
    cols = header[offset:]
    d = 2 if "xbar_2" in cols else 1
    idx = {name: offset + cols.index(name) for name in cols}
    times, pts, macro, hess = [], [], [], []
    source = rows[0][0] if offset else "pde"
    for r in rows:
        times.append(float(r[idx["t"]]))
        pts.append([float(r[idx[f"xbar_{j + 1}"]]) for j in range(d)])
        macro.append(float(r[idx["I"]]))
        if d == 1:
            hess.append([[float(r[idx["H_11"]])]])
        else:
            h11, h12, h22 = (float(r[idx[k]]) for k in ("H_11", "H_12", "H_22"))
            hess.append([[h11, h12], [h12, h22]])
    return ConcentrationTrajectory(np.array(times), np.array(pts),
                                   np.array(macro), np.array(hess),
                                   source=source)
