"""Time-series analytics: macro observables, BV/monotonicity checks,
constraint residuals, trajectory comparison."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import boundary_ring_mass, convolve_kernel, integrate
from .models import GlobalInteractionModel


class DiagnosticsError(ValueError):
    pass


@dataclass
class MacroSeries:
    """Per-step macro observables of one run: total interaction I, mass rho,
    the scaled reaction integral J = (1/eps) int psi R n, and the mass in the
    outer boundary ring."""

    times: np.ndarray
    I: np.ndarray
    rho: np.ndarray
    J: np.ndarray
    boundary_mass: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for name in ("I", "rho", "J", "boundary_mass"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.times.shape:
                raise DiagnosticsError(f"{name} length {arr.size} != "
                                       f"times length {self.times.size}")
            setattr(self, name, arr)
        if np.any(np.diff(self.times) <= 0):
            raise DiagnosticsError("times must be strictly increasing")
        if np.any(self.rho < 0):
            raise DiagnosticsError("rho must be nonnegative")


def macro_series(states, model, epsilon: float) -> MacroSeries:
    """Reduce a sequence of simulation states to the macro observables."""
    times, Is, rhos, Js, bms = [], [], [], [], []
    for st in states:
        n = st.density
        grid = n.grid
        nodes = grid.nodes()
        if isinstance(model, GlobalInteractionModel):
            psi = np.asarray(model.weight(nodes), dtype=float)
            i_val = float((psi * n.values).sum() * grid.cell_volume)
            r_vals = np.asarray(model.rate(nodes, i_val), dtype=float)
        else:
            if st.macro is not None and hasattr(st.macro, "values"):
                comp = st.macro.values
            else:
                comp = convolve_kernel(n, model.kernel).values
            i_val = float(n.values.sum() * grid.cell_volume)
            psi = np.ones(grid.shape)
            r_vals = np.asarray(model.intrinsic.value(nodes), dtype=float) - comp
        times.append(st.time)
        Is.append(i_val)
        rhos.append(integrate(n, 1))
        Js.append(float((psi * r_vals * n.values).sum()
                        * grid.cell_volume) / epsilon)
        bms.append(boundary_ring_mass(n))
    return MacroSeries(np.array(times), np.array(Is), np.array(rhos),
                       np.array(Js), np.array(bms))


def total_variation(series) -> float:
    """Sum of |increments|; equals |last - first| iff the series is monotone."""
    s = np.asarray(series, dtype=float)
    if s.size < 2:
        raise DiagnosticsError("total variation needs at least two samples")
    return float(np.abs(np.diff(s)).sum())


def constraint_residual(traj, model, t_layer: float = None):
    """|growth rate at the tracked peak| along a trajectory.

    Returns (residuals, post_layer_max) where the summary maximum skips the
    initial transient window t < t_layer (the multiplier needs a few steps
    to relax onto the constraint).
    """
    times = np.asarray(traj.times, dtype=float)
    pts = np.asarray(traj.points, dtype=float)
    macro = np.asarray(traj.macro, dtype=float)
    if isinstance(model, GlobalInteractionModel):
        res = np.abs(np.asarray(model.rate(pts, macro), dtype=float))
    else:
        r = np.asarray(model.intrinsic.value(pts), dtype=float)
        cxx = np.asarray(model.kernel(pts, pts), dtype=float)
        res = np.abs(r - macro * cxx)
    if t_layer is None:
        t_layer = times[0]
    sel = times >= t_layer
    post = float(res[sel].max()) if sel.any() else float("nan")
    return res, post


def compare_trajectories(a, b):
    """Sup distance between two peak trajectories after linear time alignment.

    Returns (sup_distance, common_times, per-time distances).
    """
    ta = np.asarray(a.times, dtype=float)
    tb = np.asarray(b.times, dtype=float)
    lo, hi = max(ta[0], tb[0]), min(ta[-1], tb[-1])
    if hi < lo:
        raise DiagnosticsError(
            f"trajectories do not overlap: [{ta[0]:g},{ta[-1]:g}] vs "
            f"[{tb[0]:g},{tb[-1]:g}]")
    common = np.unique(np.concatenate([ta[(ta >= lo) & (ta <= hi)],
                                       tb[(tb >= lo) & (tb <= hi)]]))
    pa = np.asarray(a.points, dtype=float)
    pb = np.asarray(b.points, dtype=float)
    d = pa.shape[1]
    xa = np.column_stack([np.interp(common, ta, pa[:, j]) for j in range(d)])
    xb = np.column_stack([np.interp(common, tb, pb[:, j]) for j in range(d)])
    dist = np.linalg.norm(xa - xb, axis=1)
    return float(dist.max()), common, dist


def monotonicity_violation(series, tol: float = 0.0) -> float:
    """Worst (most negative) increment; >= -tol means monotone up to tol."""
    s = np.asarray(series, dtype=float)
    if s.size < 2:
        raise DiagnosticsError("monotonicity needs at least two samples")
    return float(np.diff(s).min())


def make_report(check_name: str, value, threshold, verdict: bool,
                window=None) -> dict:
    return {"check_name": check_name, "value": value, "threshold": threshold,
            "verdict": bool(verdict), "window": window}
