"""Limit dynamics: canonical ODE, closures, weight ODE, long-time diagnostics."""

import math

import numpy as np
import pytest

from concentra.canonical import (ClosureError, ConcentrationTrajectory,
                                 HessianClosure, canonical_rhs,
                                 gradient_flow_rate, integrate_canonical,
                                 long_time_attractor, lyapunov_local,
                                 no_mutation_weight_ode, persistence_envelope,
                                 riccati_hessian_rhs)
from concentra.diagnostics import constraint_residual
from concentra.models import (ROOT_TOL, LocalCompetitionModel, ModelError,
                              QuadraticFunction, SeparableKernel, build_model,
                              make_global_model_from_rate)


def affine_2d(a=2.0, slope=(1.0, 1.0)):
    return build_model({"family": "affine_global",
                        "params": {"a": a, "slope": list(slope)}}, 2)


def quadratic_1d(k0=0.5, center=0.0):
    return build_model({"family": "quadratic_global",
                        "params": {"k0": k0, "center": [center],
                                   "weights": [1.0]}}, 1)


def quadratic_2d(k0=1.0, center=(0.0, 0.0), weights=(1.0, 1.0)):
    return build_model({"family": "quadratic_global",
                        "params": {"k0": k0, "center": list(center),
                                   "weights": list(weights)}}, 2)


def local_1d(c0=1.0, center=0.0, weight=1.0):
    return build_model({"family": "logistic_local",
                        "params": {"r": {"c0": c0, "center": [center],
                                         "weights": [weight]}}}, 1)


# --- right-hand sides --------------------------------------------------------

def test_rhs_isotropic_curvature():
    v = canonical_rhs((0.2, 0.2), -2.0 * np.eye(2), affine_2d(), macro=0.3)
    assert np.max(np.abs(v - [-0.5, -0.5])) <= 1e-14


def test_rhs_anisotropic_curvature_leaves_diagonal():
    v = canonical_rhs((0.2, 0.2), np.diag([-2.0, -10.0]), affine_2d(),
                      macro=0.3)
    assert np.max(np.abs(v - [-0.5, -0.1])) <= 1e-14


def test_rhs_vanishes_at_rate_critical_point():
    m = quadratic_2d()
    v = canonical_rhs((0.0, 0.0), -np.eye(2), m)
    assert np.max(np.abs(v)) <= 1e-12


def test_rhs_rejects_indefinite_closure():
    with pytest.raises(ClosureError):
        canonical_rhs((0.2, 0.2), np.diag([-2.0, 1.0]), affine_2d(),
                      macro=0.3)


def test_riccati_fixed_point():
    m = quadratic_2d(weights=(4.0, 4.0))      # D2R = -8 Id
    dH = riccati_hessian_rhs((0.0, 0.0), 0.1, -2.0 * np.eye(2), m)
    assert np.max(np.abs(dH)) <= 1e-14


def test_riccati_relaxation_for_flat_rate():
    dH = riccati_hessian_rhs((0.2, 0.2), 0.1, -2.0 * np.eye(2), affine_2d())
    assert np.max(np.abs(dH - 8.0 * np.eye(2))) <= 1e-14


# --- closure bookkeeping -------------------------------------------------------

def test_closure_mode_validation():
    with pytest.raises(ClosureError):
        HessianClosure("magic", initial_hessian=-np.eye(1))
    with pytest.raises(ClosureError):
        HessianClosure("from_pde")
    with pytest.raises(ClosureError):
        HessianClosure("frozen", initial_hessian=np.eye(1))


def test_trajectory_validation():
    with pytest.raises(ValueError):
        ConcentrationTrajectory(np.array([0.0, 0.0]), np.zeros((2, 1)),
                                np.zeros(2), np.full((2, 1, 1), -1.0))
    with pytest.raises(ValueError):
        ConcentrationTrajectory(np.array([0.0, 1.0]), np.zeros((2, 1)),
                                np.array([0.1, -0.5]),
                                np.full((2, 1, 1), -1.0))


def test_hessian_interpolant_clamps_to_range():
    traj = ConcentrationTrajectory(
        np.array([0.0, 1.0]), np.zeros((2, 1)), np.zeros(2),
        np.array([[[-2.0]], [[-4.0]]]))
    interp = traj.hessian_interpolant()
    assert interp(0.5)[0, 0] == pytest.approx(-3.0)
    assert interp(-7.0)[0, 0] == -2.0
    assert interp(9.0)[0, 0] == -4.0


# --- integration -----------------------------------------------------------------

def test_integrate_constant_when_gradient_vanishes():
    m = build_model({"family": "affine_global",
                     "params": {"a": 1.0, "slope": [0.0, 0.0]}}, 2)
    closure = HessianClosure("frozen", initial_hessian=-np.eye(2))
    traj = integrate_canonical((0.3, 0.4), closure, m, 0.01, 1.0)
    assert np.max(np.abs(traj.points - [0.3, 0.4])) <= 1e-14


def test_integrate_linear_ode_closed_form():
    # R = 0.5 - x^2 - I with frozen H = -2 gives xdot = -x
    m = quadratic_1d()
    closure = HessianClosure("frozen", initial_hessian=[[-2.0]])
    traj = integrate_canonical((0.5,), closure, m, 1e-3, 1.0)
    assert traj.points[-1, 0] == pytest.approx(0.5 * math.exp(-1.0),
                                               abs=1e-10)


def test_rk4_order_on_linear_ode():
    m = quadratic_1d()
    closure = HessianClosure("frozen", initial_hessian=[[-2.0]])
    exact = 0.5 * math.exp(-1.0)
    errs = []
    for dt in (0.05, 0.025):
        traj = integrate_canonical((0.5,), closure, m, dt, 1.0)
        errs.append(abs(traj.points[-1, 0] - exact))
    factor = errs[0] / errs[1]
    assert 12.0 <= factor <= 20.0


def test_integrate_frozen_anisotropic_straight_line():
    m = affine_2d()
    closure = HessianClosure("frozen",
                             initial_hessian=np.diag([-2.0, -10.0]))
    traj = integrate_canonical((0.7, 0.7), closure, m, 0.01, 0.2)
    expected = np.array([0.7, 0.7]) + traj.times[:, None] * np.array(
        [-0.5, -0.1])
    assert np.max(np.abs(traj.points - expected)) <= 1e-10
    assert traj.source == "canonical_frozen"


def test_integrate_truncates_on_domain_exit():
    m = affine_2d()
    closure = HessianClosure("frozen", initial_hessian=-np.eye(2))
    with pytest.warns(RuntimeWarning, match="left the domain"):
        traj = integrate_canonical((0.2, 0.2), closure, m, 0.01, 5.0,
                                   domain=(np.zeros(2), np.ones(2)))
    assert traj.exit_time is not None
    assert traj.times[-1] < 5.0


def test_integrate_from_pde_closure_reads_feed():
    feed = ConcentrationTrajectory(
        np.array([0.0, 2.0]), np.zeros((2, 1)), np.zeros(2),
        np.array([[[-2.0]], [[-2.0]]]))
    m = quadratic_1d()
    closure = HessianClosure("from_pde", feed=feed)
    traj = integrate_canonical((0.5,), closure, m, 1e-3, 1.0)
    assert traj.points[-1, 0] == pytest.approx(0.5 * math.exp(-1.0),
                                               abs=1e-10)
    assert traj.source == "canonical_from_pde"


def test_riccati_closure_relaxes_hessian():
    m = quadratic_1d()        # D2R = -2, fixed point H = -1
    closure = HessianClosure("riccati", initial_hessian=[[-3.0]])
    traj = integrate_canonical((0.1,), closure, m, 1e-3, 8.0)
    assert traj.hessians[-1, 0, 0] == pytest.approx(-1.0, abs=1e-6)


def test_canonical_macro_monotone_and_on_constraint():
    m = quadratic_1d()
    closure = HessianClosure("frozen", initial_hessian=[[-2.0]])
    traj = integrate_canonical((0.5,), closure, m, 1e-3, 5.0)
    assert np.diff(traj.macro).min() >= -1e-10
    res, _ = constraint_residual(traj, m)
    assert res.max() <= ROOT_TOL


# --- gradient flow -----------------------------------------------------------------

def test_gradient_flow_zero_at_equilibrium():
    assert gradient_flow_rate((0.0, 0.0), -np.eye(2), quadratic_2d()) == \
        pytest.approx(0.0, abs=1e-14)


def test_gradient_flow_reference_value():
    val = gradient_flow_rate((0.2, 0.2), -2.0 * np.eye(2), affine_2d(),
                             macro=0.3)
    assert val == pytest.approx(1.0, abs=1e-14)


def test_gradient_flow_requires_decreasing_rate_in_I():
    m = build_model({"family": "affine_global",
                     "params": {"a": 1.0, "slope": [0.0, 0.0],
                                "coef_I": 0.0}}, 2)
    with pytest.raises(ModelError):
        gradient_flow_rate((0.2, 0.2), -np.eye(2), m, macro=0.0)


def test_gradient_flow_nonnegative_property():
    rng = np.random.default_rng(53)
    m = quadratic_2d(center=(0.5, 0.5))
    worst = math.inf
    for _ in range(1000):
        ang = rng.uniform(0, 2 * math.pi)
        rad = 0.9 * math.sqrt(rng.uniform(0, 1))
        x = np.array([0.5 + rad * math.cos(ang), 0.5 + rad * math.sin(ang)])
        r0 = 1.0 - rad ** 2
        macro = rng.uniform(0.0, r0)
        A = rng.standard_normal((2, 2))
        H = -(A @ A.T + 0.1 * np.eye(2))
        worst = min(worst, gradient_flow_rate(x, H, m, macro=macro))
    assert worst >= -1e-14


# --- the no-mutation weight ODE -----------------------------------------------------

def test_weight_ode_logistic_closed_form():
    m = local_1d()      # r(0) = 1 and C(0,0) = 1: plain logistic growth
    times, rho = no_mutation_weight_ode((0.0,), 0.1, m, 1e-3, 5.0)
    exact = 1.0 / (1.0 + 9.0 * np.exp(-times))
    assert np.max(np.abs(rho - exact)) <= 1e-8


def test_weight_ode_fixed_point_is_constant():
    m = build_model({"family": "affine_global",
                     "params": {"a": 1.0, "slope": [0.0]}}, 1)
    _, rho = no_mutation_weight_ode((0.4,), 1.0, m, 1e-2, 2.0)
    assert np.max(np.abs(rho - 1.0)) <= 1e-12


def test_weight_ode_extinction_absorbing():
    _, rho = no_mutation_weight_ode((0.5,), 0.0, local_1d(), 1e-2, 2.0)
    assert np.all(rho == 0.0)


def test_weight_ode_batch_shape():
    ys = np.array([[0.4], [0.5], [0.6]])
    times, rho = no_mutation_weight_ode(ys, 0.2, local_1d(), 1e-2, 1.0)
    assert rho.shape == (times.size, 3)


# --- long-time diagnostics ------------------------------------------------------------

def test_attractor_quadratic_global():
    m = quadratic_1d(k0=0.5, center=0.0)
    (x, macro), why = long_time_attractor(m, (np.array([-1.0]),
                                              np.array([1.0])))
    assert why is None
    assert abs(x[0]) <= 1e-9
    assert macro == pytest.approx(0.5, abs=1e-9)


def test_attractor_affine_rate_has_none():
    out, why = long_time_attractor(affine_2d(), (np.zeros(2), np.ones(2)))
    assert out is None
    assert "never vanishes" in why


def test_attractor_local_quadratic():
    m = local_1d()
    (x, rho), why = long_time_attractor(m, (np.array([-0.9]),
                                            np.array([0.9])))
    assert why is None
    assert abs(x[0]) <= 1e-8
    assert rho == pytest.approx(1.0, abs=1e-8)


def _traj_1d(times, xs, macro=None):
    times = np.asarray(times, dtype=float)
    xs = np.asarray(xs, dtype=float)[:, None]
    m = np.zeros(times.size) if macro is None else np.asarray(macro)
    H = np.full((times.size, 1, 1), -1.0)
    return ConcentrationTrajectory(times, xs, m, H)


def test_persistence_constant_trajectory():
    traj = _traj_1d([0.0, 1.0, 2.0], [0.2, 0.2, 0.2])
    rep = persistence_envelope(traj, local_1d())
    assert rep == {"K": 0.0, "r_positive": True}


def test_persistence_synthetic_exponential_decay():
    ts = np.linspace(0.0, 1.0, 21)
    xs = np.sqrt(1.0 - np.exp(-2.0 * ts))   # r(x(t)) = e^{-2t} for r = 1 - x^2
    rep = persistence_envelope(_traj_1d(ts, xs), local_1d())
    assert rep["K"] == pytest.approx(2.0, abs=1e-10)
    assert rep["r_positive"]


def test_persistence_rejects_nonpositive_start():
    traj = _traj_1d([0.0, 1.0], [1.5, 1.5])
    with pytest.raises(ModelError):
        persistence_envelope(traj, local_1d())


def test_lyapunov_equilibrium_constant():
    traj = _traj_1d([0.0, 1.0, 2.0], [0.0, 0.0, 0.0], macro=[1.0, 1.0, 1.0])
    rep = lyapunov_local(traj, local_1d())
    assert rep["applicable"] and rep["passed"]
    assert rep["worst_increment"] == 0.0


def test_lyapunov_increases_along_canonical_flow():
    m = local_1d()
    closure = HessianClosure("frozen", initial_hessian=[[-2.0]])
    traj = integrate_canonical((0.5,), closure, m, 1e-2, 3.0)
    rep = lyapunov_local(traj, m)
    assert rep["passed"]
    assert np.all(np.diff(rep["series"]) > 0)


def test_lyapunov_not_applicable_for_asymmetric_kernel():
    m = build_model({"family": "logistic_local",
                     "params": {"r": {"c0": 1.0, "center": [0.0],
                                      "weights": [1.0]},
                                "symmetric": False}}, 1)
    traj = _traj_1d([0.0, 1.0], [0.1, 0.1], macro=[0.5, 0.5])
    assert lyapunov_local(traj, m) == {"applicable": False}


# --- local/global reduction -------------------------------------------------------------

def test_separable_kernel_reduces_local_to_global_dynamics():
    phi = QuadraticFunction(2.0, [0.0], [0.5])
    psi = QuadraticFunction(1.0, [0.0], [0.0])     # identically 1
    r = QuadraticFunction(1.0, [0.2], [1.0])
    local = LocalCompetitionModel(1, r, SeparableKernel(phi, psi),
                                  symmetric=False, name="reduced")

    def rate(x, I):
        return r.value(x) - phi.value(x) * np.asarray(I, dtype=float)

    glob = make_global_model_from_rate(
        rate, 1, d_rate_dI=lambda x, I: -phi.value(x))
    closure_a = HessianClosure("frozen", initial_hessian=[[-2.0]])
    closure_b = HessianClosure("frozen", initial_hessian=[[-2.0]])
    ta = integrate_canonical((0.5,), closure_a, local, 0.01, 1.0)
    tb = integrate_canonical((0.5,), closure_b, glob, 0.01, 1.0)
    assert np.max(np.abs(ta.points - tb.points)) <= 1e-9
