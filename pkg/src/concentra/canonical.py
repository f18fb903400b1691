"""Limit dynamics of the concentration point: the canonical ODE with its
Hessian closures, the no-mutation weight ODE, gradient-flow and long-time
diagnostics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .models import (ConstraintInfeasibleError, GlobalInteractionModel,
                     LocalCompetitionModel, ModelError, ROOT_TOL,
                     invert_constraint, phi_potential)


class ClosureError(ValueError):
    """Hessian closure is singular or inconsistent with the request."""


@dataclass
class ConcentrationTrajectory:
    """Sampled motion of the concentration point.

    macro holds the multiplier (global: I, local: rho); hessians the closure
    matrix used/measured at each time.  exit_time records truncation when the
    point left the domain.
    """

    times: np.ndarray
    points: np.ndarray      # (n, d)
    macro: np.ndarray       # (n,)
    hessians: np.ndarray    # (n, d, d)
    source: str = "canonical"
    exit_time: Optional[float] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.macro = np.asarray(self.macro, dtype=float)
        self.hessians = np.asarray(self.hessians, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if np.any(self.macro < -1e-12):
            raise ValueError("trajectory macro values must be nonnegative")

    def __len__(self):
        return self.times.size

    def hessian_interpolant(self):
        """Componentwise linear-in-time interpolation of the Hessian series,
        clamped to the sampled range."""
        t = self.times
        H = self.hessians

        def interp(s):
            s = min(max(float(s), t[0]), t[-1])
            d = H.shape[-1]
            out = np.empty((d, d))
            for i in range(d):
                for j in range(d):
                    out[i, j] = np.interp(s, t, H[:, i, j])
            return out

        return interp


@dataclass
class HessianClosure:
    """How the canonical ODE obtains D2u at the moving point.

    from_pde interpolates a measured series (the faithful mode); frozen keeps
    the initial matrix; riccati evolves an approximate self-contained matrix
    ODE (transport of third derivatives neglected — labeled approximate in
    all reports).
    """

    mode: str
    initial_hessian: np.ndarray = None
    feed: ConcentrationTrajectory = None

    def __post_init__(self):
        if self.mode not in ("from_pde", "frozen", "riccati"):
            raise ClosureError(f"unknown closure mode {self.mode!r}")
        if self.mode == "from_pde":
            if self.feed is None:
                raise ClosureError("from_pde closure requires a measured "
                                   "Hessian series")
        else:
            if self.initial_hessian is None:
                raise ClosureError(f"{self.mode} closure requires an initial "
                                   "Hessian")
        if self.initial_hessian is not None:
            H = np.atleast_2d(np.asarray(self.initial_hessian, dtype=float))
            if np.linalg.eigvalsh(0.5 * (H + H.T)).max() >= 0:
                raise ClosureError("initial Hessian must be negative definite")
            self.initial_hessian = H


def _solve_neg(hessian, vec):
    H = np.atleast_2d(np.asarray(hessian, dtype=float))
    ev = np.linalg.eigvalsh(0.5 * (H + H.T))
    if ev.max() >= 0:
        raise ClosureError(f"closure matrix not negative definite "
                           f"(eigenvalues {ev.tolist()})")
    return np.linalg.solve(-H, np.atleast_1d(vec))


def _local_multiplier(model: LocalCompetitionModel, x):
    r = float(model.intrinsic.value(x))
    return max(r, 0.0) / float(model.kernel(x, x))


def canonical_rhs(x_bar, hessian, model, macro=None):
    """Velocity (-D2u)^{-1} grad_x(growth) of the concentration point."""
    x = np.asarray(x_bar, dtype=float)
    if isinstance(model, GlobalInteractionModel):
        i_bar = invert_constraint(model, x) if macro is None else float(macro)
        g = np.asarray(model.grad_x_rate(x, i_bar), dtype=float)
    else:
        rho = _local_multiplier(model, x) if macro is None else float(macro)
        g = (np.asarray(model.intrinsic.grad(x), dtype=float)
             - rho * np.asarray(model.kernel.grad_x(x, x), dtype=float))
    return _solve_neg(hessian, g)


def riccati_hessian_rhs(x_bar, macro, hessian, model):
    """Approximate closure dH/dt = D2_x(growth) + 2 H^2 (third-derivative
    transport neglected)."""
    x = np.asarray(x_bar, dtype=float)
    H = np.atleast_2d(np.asarray(hessian, dtype=float))
    if isinstance(model, GlobalInteractionModel):
        d2 = np.asarray(model.hess_x_rate(x, macro), dtype=float)
    else:
        d2 = (np.asarray(model.intrinsic.hess(x), dtype=float)
              - float(macro) * np.asarray(model.kernel.hess_x(x, x), dtype=float))
    out = d2 + 2.0 * H @ H
    return 0.5 * (out + out.T)


def _multiplier(model, x, guess=None):
    if isinstance(model, GlobalInteractionModel):
        return invert_constraint(model, x, guess=guess)
    return _local_multiplier(model, x)


def integrate_canonical(x0, closure: HessianClosure, model, dt: float,
                        T: float, domain=None) -> ConcentrationTrajectory:
    """Classical RK4 on the canonical ODE, sampling every dt.

    The multiplier is recomputed algebraically at every stage.  In riccati
    mode the Hessian integrates alongside the position; in from_pde mode it
    is read from the measured series.  The trajectory truncates (with
    exit_time recorded) if the point leaves `domain`.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x.size
    steps = max(1, int(round(T / dt)))
    source = f"canonical_{closure.mode}"

    feed_interp = closure.feed.hessian_interpolant() \
        if closure.mode == "from_pde" else None

    def hess_at(t, H_state):
        if closure.mode == "frozen":
            return closure.initial_hessian
        if closure.mode == "riccati":
            return H_state
        return feed_interp(t)

    H = None
    if closure.mode == "riccati":
        H = closure.initial_hessian.copy()
    elif closure.mode == "frozen":
        H = closure.initial_hessian

    times = [0.0]
    pts = [x.copy()]
    macros = [_multiplier(model, x)]
    hessians = [np.atleast_2d(hess_at(0.0, H))]
    exit_time = None
    guess = macros[0]

    t = 0.0
    for _ in range(steps):
        def rhs(tau, xs, Hs):
            m = _multiplier(model, xs, guess=guess)
            Hc = hess_at(tau, Hs)
            v = canonical_rhs(xs, Hc, model, macro=m)
            dH = riccati_hessian_rhs(xs, m, Hs, model) \
                if closure.mode == "riccati" else None
            return v, dH

        def h_stage(kH, w):
            if closure.mode == "riccati":
                return H + w * dt * kH
            return H  # frozen matrix, or None (from_pde reads the feed)

        k1x, k1H = rhs(t, x, H)
        k2x, k2H = rhs(t + 0.5 * dt, x + 0.5 * dt * k1x, h_stage(k1H, 0.5))
        k3x, k3H = rhs(t + 0.5 * dt, x + 0.5 * dt * k2x, h_stage(k2H, 0.5))
        k4x, k4H = rhs(t + dt, x + dt * k3x, h_stage(k3H, 1.0))
        x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        if closure.mode == "riccati":
            H = H + dt / 6.0 * (k1H + 2 * k2H + 2 * k3H + k4H)
        t += dt
        if domain is not None:
            lower, upper = (np.atleast_1d(np.asarray(v, dtype=float))
                            for v in domain)
            if np.any(x < lower) or np.any(x > upper):
                exit_time = t
                warnings.warn(f"canonical trajectory left the domain at "
                              f"t={t:.6g}; truncated", RuntimeWarning)
                break
        m = _multiplier(model, x, guess=guess)
        guess = m
        times.append(t)
        pts.append(x.copy())
        macros.append(m)
        hessians.append(np.atleast_2d(hess_at(t, H)))

    return ConcentrationTrajectory(np.array(times), np.array(pts),
                                   np.array(macros), np.array(hessians),
                                   source=source, exit_time=exit_time)


def gradient_flow_rate(x_bar, hessian, model: GlobalInteractionModel,
                       macro=None) -> float:
    """Predicted dI/dt = (-1/R_I) gradR . (-H)^{-1} gradR; nonnegative when
    R_I < 0 and -H is positive definite."""
    x = np.asarray(x_bar, dtype=float)
    i_bar = invert_constraint(model, x) if macro is None else float(macro)
    g = np.asarray(model.grad_x_rate(x, i_bar), dtype=float)
    r_i = float(model.d_rate_dI(x, i_bar))
    if not r_i < 0:
        raise ModelError(f"dR/dI = {r_i:.6g} is not negative at "
                         f"x={x.tolist()}")
    return float((-1.0 / r_i) * g @ _solve_neg(hessian, g))


def no_mutation_weight_ode(y, rho0, model, dt: float, T: float):
    """Weight dynamics of a mutation-free population fixed at trait(s) y.

    drho/dt = rho * R(y, psi(y) rho) (global) or rho (r(y) - rho C(y,y))
    (local).  Accepts a single trait point or a batch (m, d); returns
    (times, rho) with rho of shape (steps+1,) or (steps+1, m).
    """
    y = np.asarray(y, dtype=float)
    batch = y.ndim == 2
    ys = y if batch else y[None, :]
    rho = np.atleast_1d(np.asarray(rho0, dtype=float)).astype(float)
    if rho.size == 1 and batch:
        rho = np.full(ys.shape[0], float(rho0))
    if np.any(rho < 0):
        raise ModelError("initial weight must be nonnegative")

    if isinstance(model, GlobalInteractionModel):
        psi = np.asarray(model.weight(ys), dtype=float)

        def f(r):
            return r * np.asarray(model.rate(ys, psi * r), dtype=float)
    else:
        r_y = np.asarray(model.intrinsic.value(ys), dtype=float)
        c_yy = np.asarray(model.kernel(ys, ys), dtype=float)

        def f(r):
            return r * (r_y - r * c_yy)

    steps = max(1, int(round(T / dt)))
    out = np.empty((steps + 1, ys.shape[0]))
    out[0] = rho
    for k in range(steps):
        r = out[k]
        k1 = f(r)
        k2 = f(r + 0.5 * dt * k1)
        k3 = f(r + 0.5 * dt * k2)
        k4 = f(r + dt * k3)
        out[k + 1] = r + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    times = np.arange(steps + 1) * dt
    return (times, out if batch else out[:, 0])


def _newton_critical_point(grad, jac, x0, domain, tol=1e-12, iters=100):
    x = np.array(x0, dtype=float)
    lower, upper = (np.atleast_1d(np.asarray(v, dtype=float)) for v in domain)
    for _ in range(iters):
        g = grad(x)
        if np.linalg.norm(g) <= tol:
            return x
        try:
            step = np.linalg.solve(jac(x), -g)
        except np.linalg.LinAlgError:
            return None
        x = x + step
        if np.any(x < lower - 1.0) or np.any(x > upper + 1.0):
            return None
    return None


def long_time_attractor(model, domain):
    """Rest point of the limit dynamics, or None with a diagnostic.

    Global: joint solve of grad_x R = 0 and R = 0 (the multiplier is
    eliminated algebraically).  Local symmetric: maximizer of the
    log-potential on {r > 0}.  Newton from the domain center, multistart on
    a coarse grid on failure.
    """
    lower, upper = (np.atleast_1d(np.asarray(v, dtype=float)) for v in domain)
    d = lower.size
    center = 0.5 * (lower + upper)

    if isinstance(model, GlobalInteractionModel):
        def grad(x):
            i = invert_constraint(model, x)
            return np.asarray(model.grad_x_rate(x, i), dtype=float)

        def jac(x):
            i = invert_constraint(model, x)
            return np.atleast_2d(np.asarray(model.hess_x_rate(x, i),
                                            dtype=float))
    else:
        if not model.symmetric:
            return None, "attractor theory requires a symmetric kernel"

        def grad(x):
            r = float(model.intrinsic.value(x))
            if r <= 0:
                raise ModelError("outside {r > 0}")
            c = float(model.kernel(x, x))
            dc = (np.asarray(model.kernel.grad_x(x, x), dtype=float)
                  + np.asarray(model.kernel.grad_y(x, x), dtype=float))
            return np.asarray(model.intrinsic.grad(x), dtype=float) / r - dc / c

        def jac(x):
            h = 1e-6
            out = np.empty((d, d))
            for j in range(d):
                e = np.zeros(d)
                e[j] = h
                out[:, j] = (grad(x + e) - grad(x - e)) / (2 * h)
            return out

    starts = [center]
    axes = [np.linspace(lower[j], upper[j], 7)[1:-1] for j in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    starts += list(np.stack(mesh, axis=-1).reshape(-1, d))

    for x0 in starts:
        try:
            x = _newton_critical_point(grad, jac, x0, (lower, upper))
        except (ModelError, ConstraintInfeasibleError):
            continue
        if x is None or np.any(x < lower) or np.any(x > upper):
            continue
        if isinstance(model, GlobalInteractionModel):
            return (x, invert_constraint(model, x)), None
        return (x, _local_multiplier(model, x)), None
    return None, "gradient never vanishes in the domain"


def persistence_envelope(traj: ConcentrationTrajectory,
                         model: LocalCompetitionModel) -> dict:
    """Smallest K >= 0 with r(x(t)) >= r(x(0)) e^{-K t} along the samples."""
    pts = np.asarray(traj.points, dtype=float)
    times = np.asarray(traj.times, dtype=float)
    r = np.asarray(model.intrinsic.value(pts), dtype=float)
    if r[0] <= 0:
        raise ModelError(f"initial intrinsic rate {r[0]:.6g} <= 0; "
                         "persistence bound does not apply")
    positive = bool(np.all(r > 0))
    if not positive:
        return {"K": float("inf"), "r_positive": False}
    later = times > times[0]
    if later.any():
        rates = np.log(r[0] / r[later]) / (times[later] - times[0])
        K = max(0.0, float(rates.max()))
    else:
        K = 0.0
    return {"K": K, "r_positive": True}


def lyapunov_local(traj: ConcentrationTrajectory,
                   model: LocalCompetitionModel, tol: float = 1e-8) -> dict:
    """Series rho^2 C(x,x), which is non-decreasing for symmetric kernels."""
    if not model.symmetric:
        return {"applicable": False}
    pts = np.asarray(traj.points, dtype=float)
    rho = np.asarray(traj.macro, dtype=float)
    series = rho ** 2 * np.asarray(model.kernel(pts, pts), dtype=float)
    worst = float(np.diff(series).min()) if series.size > 1 else 0.0
    return {"applicable": True, "series": series, "worst_increment": worst,
            "passed": bool(worst >= -tol)}
