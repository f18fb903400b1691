"""Log transform u = eps ln(n), peak location/curvature, regularity monitors.

The density concentrates like exp(u/eps); u stays order one, so the Dirac
location is read off as the maximum of u and the mutation matrix as its
Hessian there.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import DensityField, GridError, ScalarField, TraitGrid

DENSITY_FLOOR = 1e-280   # keeps u finite; far below any meaningful density
EXP_LIMIT = 700.0        # exp overflow threshold for u/eps
WELL_RESOLVED_DROP = 40.0  # nodes with u >= max - 40 eps enter statistics
MULTI_MAX_DROP_FACTOR = 1e6  # secondary maxima must exceed max - eps ln(1e6)


class WkbError(ValueError):
    """Invalid transform input or out-of-range request."""


@dataclass
class WkbField:
    """u = eps ln n on a grid; `floor_mask` flags nodes clipped at the
    density floor (excluded from regularity statistics)."""

    grid: TraitGrid
    values: np.ndarray
    epsilon: float
    floor_mask: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            self.values = self.values.reshape(self.grid.shape)
        if self.epsilon <= 0:
            raise WkbError(f"epsilon must be positive, got {self.epsilon}")
        if self.floor_mask is None:
            self.floor_mask = np.zeros(self.grid.shape, dtype=bool)


def to_wkb(density: DensityField, epsilon: float) -> WkbField:
    """u = eps * ln(max(n, floor)); floor-clipped nodes are flagged."""
    if epsilon <= 0:
        raise WkbError(f"epsilon must be positive, got {epsilon}")
    n = density.values
    mask = n < DENSITY_FLOOR
    u = epsilon * np.log(np.maximum(n, DENSITY_FLOOR))
    return WkbField(density.grid, u, epsilon, mask)


def from_wkb(u: WkbField, epsilon: float = None) -> DensityField:
    """n = exp(u/eps); exact inverse of to_wkb above the floor."""
    eps = u.epsilon if epsilon is None else epsilon
    arg = u.values / eps
    if np.any(arg > EXP_LIMIT):
        k = tuple(int(i) for i in
                  np.unravel_index(int(np.argmax(arg)), u.values.shape))
        raise WkbError(f"u/eps = {arg[k]:.3g} overflows exp at node {k}")
    return DensityField(u.grid, np.exp(arg))


# --- peak location and curvature -------------------------------------------

def _window_slices(idx, shape):
    return tuple(slice(i - 1, i + 2) for i in idx)


def _is_interior(idx, shape, margin=1):
    return all(margin <= i < n - margin for i, n in zip(idx, shape))


def _fit_quadratic(values: np.ndarray, idx: tuple, grid: TraitGrid):
    """Least-squares quadratic on the 3x3 (or 3-point) window around a node.

    Returns (value, gradient, hessian) of the fit at the node center in
    physical coordinates.  Exact on quadratic data.
    """
    h = grid.spacing
    window = values[_window_slices(idx, values.shape)]
    if grid.dimension == 1:
        fm, f0, fp = window
        c1 = (fp - fm) / (2.0 * h[0])
        c2 = (fp - 2.0 * f0 + fm) / (2.0 * h[0] ** 2)
        return float(f0), np.array([c1]), np.array([[2.0 * c2]])
    dx = np.array([-h[0], 0.0, h[0]])
    dy = np.array([-h[1], 0.0, h[1]])
    X, Y = np.meshgrid(dx, dy, indexing="ij")
    design = np.column_stack([np.ones(9), X.ravel(), Y.ravel(),
                              X.ravel() ** 2, (X * Y).ravel(), Y.ravel() ** 2])
    coef, *_ = np.linalg.lstsq(design, window.ravel(), rcond=None)
    c0, c1, c2, c3, c4, c5 = coef
    grad = np.array([c1, c2])
    hess = np.array([[2.0 * c3, c4], [c4, 2.0 * c5]])
    return float(c0), grad, hess


def _refine_max(u: WkbField, idx: tuple):
    """Sub-grid peak via the quadratic fit; falls back to the node when the
    fitted vertex is degenerate or more than one cell away."""
    grid = u.grid
    node = np.array([grid.axis_coords(j)[idx[j]] for j in range(grid.dimension)])
    f0, g, h = _fit_quadratic(u.values, idx, grid)
    try:
        delta = np.linalg.solve(h, -g)
    except np.linalg.LinAlgError:
        return node, f0
    ev = np.linalg.eigvalsh(0.5 * (h + h.T))
    if ev.max() >= 0 or np.any(np.abs(delta) > np.asarray(grid.spacing)):
        return node, f0
    value = f0 + g @ delta + 0.5 * delta @ h @ delta
    return node + delta, float(value)


def locate_max(u: WkbField, multi: bool = False):
    """Peak(s) of u: grid argmax refined by a local quadratic fit.

    With `multi`, every strict local maximum within eps*ln(1e6) of the global
    one is reported (coexisting concentration points).  Peaks on the boundary
    ring are returned at the raw node with a warning (fit window unavailable).
    """
    vals = u.values
    shape = vals.shape
    flat_max = float(vals.max())
    candidates = []
    if multi:
        cut = flat_max - u.epsilon * np.log(MULTI_MAX_DROP_FACTOR)
        local = np.ones(shape, dtype=bool)
        for ax in range(vals.ndim):
            up = np.roll(vals, -1, axis=ax)
            dn = np.roll(vals, 1, axis=ax)
            # roll wraps; edges handled by the >= comparison against self
            edge_hi = [slice(None)] * vals.ndim
            edge_hi[ax] = slice(-1, None)
            edge_lo = [slice(None)] * vals.ndim
            edge_lo[ax] = slice(0, 1)
            up[tuple(edge_hi)] = -np.inf
            dn[tuple(edge_lo)] = -np.inf
            local &= (vals >= up) & (vals >= dn)
        if vals.ndim == 2:
            for sx in (-1, 1):
                for sy in (-1, 1):
                    diag = np.roll(np.roll(vals, sx, axis=0), sy, axis=1)
                    edge = [slice(None)] * 2
                    edge[0] = slice(0, 1) if sx == 1 else slice(-1, None)
                    diag[tuple(edge)] = -np.inf
                    edge = [slice(None)] * 2
                    edge[1] = slice(0, 1) if sy == 1 else slice(-1, None)
                    diag[tuple(edge)] = -np.inf
                    local &= vals >= diag
        for idx in np.argwhere(local & (vals >= cut)):
            candidates.append(tuple(idx))
    else:
        candidates.append(np.unravel_index(int(np.argmax(vals)), shape))

    out = []
    for idx in candidates:
        if not _is_interior(idx, shape):
            warnings.warn(f"maximum at boundary node {tuple(int(i) for i in idx)}; "
                          "refinement skipped", RuntimeWarning)
            node = np.array([u.grid.axis_coords(j)[idx[j]]
                             for j in range(u.grid.dimension)])
            out.append((node, float(vals[tuple(idx)])))
        else:
            out.append(_refine_max(u, tuple(idx)))
    out.sort(key=lambda pv: -pv[1])
    return out


def hessian_at(u: WkbField, x_bar) -> np.ndarray:
    """Curvature of u at a point, from the same quadratic fit as locate_max."""
    idx = u.grid.nearest_index(np.asarray(x_bar, dtype=float))
    if not _is_interior(idx, u.values.shape, margin=2):
        raise WkbError(f"point {np.asarray(x_bar).tolist()} is within two "
                       "cells of the boundary; Hessian unavailable")
    _, _, h = _fit_quadratic(u.values, idx, u.grid)
    return 0.5 * (h + h.T)


# --- regularity monitors -----------------------------------------------------

def well_resolved_mask(u: WkbField) -> np.ndarray:
    return (~u.floor_mask) & (u.values >= u.values.max()
                              - WELL_RESOLVED_DROP * u.epsilon)


def _interior_mask(shape, margin=1):
    m = np.ones(shape, dtype=bool)
    for ax in range(len(shape)):
        idx = [slice(None)] * len(shape)
        idx[ax] = slice(0, margin)
        m[tuple(idx)] = False
        idx[ax] = slice(-margin, None)
        m[tuple(idx)] = False
    return m


def _second_differences(values, spacing):
    """Per-node symmetric Hessian entries on the interior (nan elsewhere)."""
    d = values.ndim
    out = np.full(values.shape + (d, d), np.nan)
    inner = tuple(slice(1, -1) for _ in range(d))
    for ax in range(d):
        sl_p = [slice(1, -1)] * d
        sl_p[ax] = slice(2, None)
        sl_m = [slice(1, -1)] * d
        sl_m[ax] = slice(0, -2)
        sl_0 = [slice(1, -1)] * d
        out[inner + (ax, ax)] = (values[tuple(sl_p)] - 2 * values[tuple(sl_0)]
                                 + values[tuple(sl_m)]) / spacing[ax] ** 2
    if d == 2:
        mixed = (values[2:, 2:] - values[2:, :-2] - values[:-2, 2:]
                 + values[:-2, :-2]) / (4.0 * spacing[0] * spacing[1])
        out[inner + (0, 1)] = mixed
        out[inner + (1, 0)] = mixed
    return out


def _third_difference_max(values, spacing, mask):
    """Largest directional third difference over masked nodes (axes and, in
    2D, the two diagonals)."""
    worst = 0.0
    d = values.ndim
    dirs = [tuple(int(j == ax) for j in range(d)) for ax in range(d)]
    if d == 2:
        dirs += [(1, 1), (1, -1)]
    for direction in dirs:
        step = np.hypot(*(s * h for s, h in zip(direction, spacing))) if d == 2 \
            else abs(direction[0]) * spacing[0]
        # node offsets of the 4-point stencil along `direction`
        shifted = [[k * s for s in direction] for k in (-1, 0, 1, 2)]
        n = values.shape
        lo = [max(0, -min(sl[ax] for sl in shifted)) for ax in range(d)]
        hi = [n[ax] - max(0, max(sl[ax] for sl in shifted)) for ax in range(d)]
        if any(hi[ax] <= lo[ax] for ax in range(d)):
            continue
        def take(offsets):
            sl = tuple(slice(lo[ax] + offsets[ax], hi[ax] + offsets[ax])
                       for ax in range(d))
            return values[sl]
        f0, f1, f2, fm = (take(shifted[1]), take(shifted[2]),
                          take(shifted[3]), take(shifted[0]))
        third = np.abs(f2 - 3 * f1 + 3 * f0 - fm) / step ** 3
        core = tuple(slice(lo[ax], hi[ax]) for ax in range(d))
        m = mask[core]
        if m.any():
            worst = max(worst, float(third[m].max()))
    return worst


def regularity_monitor(u: WkbField, constants, time: float = 0.0) -> dict:
    """Audit u against the concavity-regime bounds.

    Reports the quadratic envelope (with the time-growing slack), the Hessian
    eigenvalue range over well-resolved nodes, the largest third difference,
    and the measured gradient-growth constant.  Checks lacking constants are
    reported as null.
    """
    grid = u.grid
    c = constants
    mask = well_resolved_mask(u)
    nodes = grid.nodes()
    norms2 = (nodes ** 2).sum(axis=-1)
    report = {"time": time,
              "well_resolved_fraction": float(mask.mean()),
              "envelope": None, "hessian": None,
              "third_derivative_max": None, "gradient_growth": None}

    if all(getattr(c, k, None) is not None for k in
           ("L_bar_0", "L_bar_1", "L_under_0", "L_under_1", "K_bar_0")):
        slack = (c.K_bar_0 + 2.0 * grid.dimension * u.epsilon * c.L_bar_1) * time
        upper = c.L_bar_0 - c.L_bar_1 * norms2 + slack
        lower = -c.L_under_0 - c.L_under_1 * norms2 - slack
        if mask.any():
            margin = float(np.minimum(upper - u.values,
                                      u.values - lower)[mask].min())
        else:
            margin = float("nan")
        report["envelope"] = {"margin": margin, "slack": slack,
                              "passed": bool(margin >= -1e-10)}

    interior = mask & _interior_mask(grid.shape)
    if interior.any():
        hess = _second_differences(u.values, grid.spacing)
        ev = np.linalg.eigvalsh(hess[interior])
        lo, hi = float(ev.min()), float(ev.max())
        entry = {"eig_min": lo, "eig_max": hi}
        if getattr(c, "L_bar_1", None) is not None and \
                getattr(c, "L_under_1", None) is not None:
            entry["bracket"] = [-2.0 * c.L_under_1, -2.0 * c.L_bar_1]
            entry["passed"] = bool(lo >= -2.0 * c.L_under_1 - 1e-10
                                   and hi <= -2.0 * c.L_bar_1 + 1e-10)
        report["hessian"] = entry
        report["third_derivative_max"] = _third_difference_max(
            u.values, grid.spacing, interior)

        grads = np.gradient(u.values, *grid.spacing)
        if grid.dimension == 1:
            gn = np.abs(grads)
        else:
            gn = np.hypot(*grads)
        ratio = gn / (1.0 + np.sqrt(norms2))
        measured = float(ratio[mask].max())
        entry = {"measured_constant": measured}
        if getattr(c, "C_grad_u", None) is not None:
            entry["bound"] = c.C_grad_u
            entry["passed"] = bool(measured <= c.C_grad_u + 1e-10)
        report["gradient_growth"] = entry

    return report
