"""Acceptance criteria, one test each; every test prints a PASS/FAIL line via ``report``."""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate

from polybgk.config import RunConfig
from polybgk.experiments import decay, gaussian_state, initial_condition
from polybgk.grid import ModelParams, build_grid, global_maxwellian
from polybgk.linearized import (
    DEFAULT_EPS,
    ProjectionBasis,
    check_linearization,
    check_projection_algebra,
    dissipation_checks,
    e_split_closed_form,
    e_split_norm,
    kernel_dimension,
    random_fields,
)
from polybgk.moments import compute_moments
from polybgk.solver import SolverConfig, run

pytestmark = pytest.mark.acceptance

NUS = (-0.45, 0.0, 0.5, 0.9)
THETAS = (0.0, 1e-3, 0.5, 1.0)


@pytest.fixture(scope="module")
def default_grid():
    return build_grid(ModelParams(0.5, 0.5, 2.0), nx=4)


@pytest.fixture(scope="module")
def default_basis(default_grid):
    return ProjectionBasis.build(default_grid)


@pytest.fixture(scope="module")
def fields200(default_grid):
    return random_fields(default_grid, 200, seed=0)


@pytest.fixture(scope="module")
def sweep(default_basis, fields200):
    plist = [ModelParams(nu, th, 2.0) for nu in NUS for th in THETAS]
    return dissipation_checks(default_basis, plist, fields200)


def _gram_error(nv):
    g = build_grid(ModelParams(0.5, 0.5, 2.0), nx=4, nv=nv)
    sm = np.sqrt(global_maxwellian(g))
    v = g.vel
    v2 = np.sum(v**2, axis=-1)
    q = [(3 * v[..., i] ** 2 - v2)[..., None] * sm for i in range(3)]
    G = np.array([[np.sum(g.weights * a * b) for b in q] for a in q])
    return float(np.max(np.abs(G - (18.0 * np.eye(3) - 6.0))))


def test_criterion_01_projection_algebra(report, default_basis, fields200):
    start = time.perf_counter()
    res = check_projection_algebra(default_basis, fields200)
    elapsed = time.perf_counter() - start
    ok = report(1, res.passed and elapsed < 30,
                f"worst violation {-res.worst_margin:.2e} (tol 1e-12), {elapsed:.1f} s (limit 30 s)")
    assert ok


def test_criterion_02_gram_values(report):
    errs = {nv: _gram_error(nv) for nv in (20, 24, 32)}
    ok = report(2, errs[24] <= 1e-6 and errs[32] < errs[24] < errs[20],
                "Gram error by nv: " + ", ".join(f"{k}: {v:.2e}" for k, v in errs.items()))
    assert ok


def test_criterion_03_dissipation_identity(report, sweep):
    worst = max(-checks[0].worst_margin for checks in sweep.values())
    ok = report(3, all(checks[0].passed for checks in sweep.values()),
                f"max |lhs - rhs| / ||f||^2 = {worst:.2e} over {len(sweep)} (nu, theta) pairs (tol 1e-10)")
    assert ok


def test_criterion_04_coercivity(report, sweep):
    coer = min(checks[2].worst_margin for checks in sweep.values())
    B = min(checks[1].worst_margin for checks in sweep.values())
    ok = report(4, coer >= -1e-10 and B >= -1e-10,
                f"worst coercivity margin {coer:.2e}, min B/||f||^2 {B:.2e} (tol -1e-10)")
    assert ok


def test_criterion_05_kernel_dichotomy(report, default_basis):
    # doubled-resolution oracle for the overlap of the translational energy mode with e_c
    g = build_grid(ModelParams(0.0, 1.0, 2.0), nx=4, nv=48, ni=64)
    v2 = np.sum(g.vel**2, axis=-1)[..., None]
    y = g.y_nodes
    m = g.lam * (2 * np.pi) ** -1.5 * np.exp(-0.5 * v2 - y)

    def ip(a, b):
        return float(np.sum(g.weights * m * a * b))

    es, ec = v2 - 3.0, (v2 - 3.0) + (2.0 * y - 2.0)
    overlap = ip(es, ec) / math.sqrt(ip(es, es) * ip(ec, ec))

    dims, errs, oracle_gap = {}, [], []
    for nu in (0.0, 0.5):
        for th in (0.0, 1e-3, 1e-2, 0.1, 1.0):
            p = ModelParams(nu, th, 2.0)
            dims[(nu, th)] = kernel_dimension(default_basis, p)
            closed = e_split_closed_form(p)
            errs.append(abs(e_split_norm(default_basis, p) - closed))
            oracle_gap.append(abs(closed - th / p.freq_denominator * math.sqrt(1 - overlap**2)))
    dims_ok = all(d == (6 if th == 0 else 5) for (_, th), d in dims.items())
    ok = report(5, dims_ok and max(errs) <= 1e-8 and max(oracle_gap) <= 1e-8,
                f"kernel dims by theta {[dims[(0.0, th)] for th in (0.0, 1e-3, 1e-2, 0.1, 1.0)]} "
                f"(nu in {{0, 0.5}}), max |L e_split| error {max(errs):.2e}, "
                f"closed form vs quadrature oracle {max(oracle_gap):.2e}")
    assert ok


def test_criterion_06_linearization_order(report, default_basis):
    smooth = random_fields(default_basis.grid, 5, seed=1)
    lines, ok = [], True
    for p in (ModelParams(0.5, 0.5, 2.0), ModelParams(-0.45, 0.0, 2.0), ModelParams(0.0, 1.0, 2.0)):
        r, s = check_linearization(default_basis, p, smooth, DEFAULT_EPS)
        ok &= r.passed and s.passed
        lines.append(f"(nu={p.nu}, theta={p.theta}) margins r {r.worst_margin:.3f} s {s.worst_margin:.3f}")
    assert report(6, ok, "slopes inside [1.9, 2.1]; " + "; ".join(lines))


def test_criterion_07_conservation(report):
    cfg = RunConfig(initial="perturbation", amplitude=0.3, modes=[1, 2], t_end=20.0, steps=1000,
                    output_every=100).validate()
    p = ModelParams(cfg.nu, cfg.theta, cfg.delta)
    g = build_grid(p, nx=32, nv=24, ni=32)
    F0 = initial_condition(cfg, g)
    start = time.perf_counter()
    F, diag = run(F0, g, p, SolverConfig(t_end=20.0, steps=1000, output_every=100))
    elapsed = time.perf_counter() - start
    drift = diag.conservation_drift()
    ok = report(7, float(np.max(drift)) <= 1e-10 and elapsed < 600,
                f"max relative drift {np.max(drift):.2e} (tol 1e-10), 1000 steps in {elapsed:.0f} s")
    assert ok


def test_criterion_08_h_theorem(report):
    lines, ok = [], True
    for p in (ModelParams(0.5, 0.5, 2.0), ModelParams(-0.4, 0.0, 2.0), ModelParams(0.9, 1.0, 2.0)):
        g = build_grid(p, nx=4, nv=24, ni=16)
        cell = gaussian_state(g, 1.0, np.zeros(3), np.diag([1.5, 0.75, 0.75]), 1.0)
        F0 = np.broadcast_to(cell, g.shape).copy()
        _, diag = run(F0, g, p, SolverConfig(t_end=2.0, steps=400))
        H = diag.column("H")
        worst = float(np.max(np.diff(H) / np.abs(H[:-1])))
        ok &= worst <= 1e-12 and diag.column("minF").min() >= 0
        lines.append(f"(nu={p.nu}, theta={p.theta}) max relative rise {worst:.1e}")
    assert report(8, ok, "; ".join(lines) + "; F >= 0")


def test_criterion_09_equilibrium(report):
    p = ModelParams(0.5, 0.5, 2.0)
    g = build_grid(p, nx=8, nv=24, ni=32)
    m = global_maxwellian(g)
    worst = [0.0]

    def track(step, t, F):
        worst[0] = max(worst[0], float(np.max(np.abs(F - m))))

    run(np.broadcast_to(m, g.shape).copy(), g, p, SolverConfig(t_end=1.0, steps=1000, output_every=1),
        callback=track)
    assert report(9, worst[0] <= 1e-13, f"max ||F(t) - m||_inf over 1000 steps = {worst[0]:.2e} (tol 1e-13)")


def test_criterion_10_decay(report, tmp_path):
    base = RunConfig(nu=0.0, nx=16, nv=20, ni=8, initial="perturbation", amplitude=1e-3, t_end=10.0,
                     output_every=5)
    lines, ok = [], True
    for th in (0.0, 0.5, 1.0):
        fit, _, extra = decay(replace(base, theta=th).validate(), None)
        R = extra["R"]
        ok &= fit.passed and bool(np.all(np.isfinite(R[1:])))
        lines.append(f"theta={th}: rate {fit.rate:.3f}, R2 {fit.r_squared:.4f}, max R {np.nanmax(R):.2f}")
    assert report(10, ok, "; ".join(lines))


def test_criterion_11_relaxation_ode(report):
    p = ModelParams(0.0, 1.0, 2.0)
    g = build_grid(p, nx=4, nv=24, ni=16)
    cell = gaussian_state(g, 1.0, np.zeros(3), np.diag([1.5, 0.75, 0.75]), 1.0)
    F0 = np.broadcast_to(cell, g.shape).copy()
    dist, times = [], []

    def track(step, t, F):
        st = compute_moments(F[0], g, p)
        dist.append(float(np.linalg.norm(st.Theta - st.T_delta * np.eye(3))))
        times.append(t)

    run(F0, g, p, SolverConfig(t_end=2.0, steps=2000, output_every=10), callback=track)

    s0 = compute_moments(F0[0], g, p)
    rho, delta = float(s0.rho), g.delta

    def rhs(t, z):
        Theta, T_I = z[:9].reshape(3, 3), z[9]
        T_d = (np.trace(Theta) + delta * T_I) / (3.0 + delta)
        A = rho * T_d
        return np.concatenate([(A * (T_d * np.eye(3) - Theta)).ravel(), [A * (T_d - T_I)]])

    z0 = np.concatenate([s0.Theta.ravel(), [float(s0.T_Idelta)]])
    sol = integrate.solve_ivp(rhs, (0.0, 2.0), z0, method="DOP853", t_eval=times, rtol=1e-12, atol=1e-14)
    oracle = []
    for z in sol.y.T:
        Theta, T_I = z[:9].reshape(3, 3), z[9]
        T_d = (np.trace(Theta) + delta * T_I) / (3.0 + delta)
        oracle.append(np.linalg.norm(Theta - T_d * np.eye(3)))
    err = float(np.max(np.abs(np.array(dist) - np.array(oracle))))
    assert report(11, err <= 1e-6, f"max |distance - ODE oracle| = {err:.2e} over {len(times)} samples (tol 1e-6)")
