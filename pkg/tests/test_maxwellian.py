import math

import numpy as np
import pytest

from polybgk.grid import ModelParams, build_grid, global_maxwellian
from polybgk.maxwellian import (
    MomentMatchError,
    MomentTarget,
    SPDError,
    collision_invariants,
    ellipsoidal_maxwellian,
    h_functional,
    maxwellian_factors,
    moment_match,
    moment_match_factors,
)
from polybgk.moments import InvalidFieldError, compute_moments, state_from_moments


def test_fixed_point(cell_grid):
    m = global_maxwellian(cell_grid)
    M = ellipsoidal_maxwellian(compute_moments(m, cell_grid), cell_grid)
    assert np.max(np.abs(M - m)) <= 1e-13


def test_nu0_theta1_is_isotropic(cell_grid):
    p = ModelParams(0.0, 1.0, 2.0)
    S = np.diag([1.5, 0.75, 0.75])
    st = state_from_moments(np.array(1.0), np.zeros(3), S, np.array(0.8), p)
    assert np.array_equal(st.TensT, st.T_delta * np.eye(3))
    assert st.T_theta == st.T_delta


def test_shifted_round_trip(cell_grid):
    m = global_maxwellian(cell_grid)
    st = compute_moments(m, cell_grid)
    st.U = np.array([0.3, 0.0, 0.0])
    M = ellipsoidal_maxwellian(st, cell_grid)
    assert np.all(M > 0)
    back = compute_moments(M, cell_grid)
    assert np.allclose(back.U, [0.3, 0, 0], atol=1e-12)
    assert back.rho == pytest.approx(1.0, abs=1e-12)


def test_theta_zero_exponent_uses_corrected_tensor(cell_grid):
    p = ModelParams(0.5, 0.0, 2.0)
    st = state_from_moments(np.array(1.0), np.zeros(3), np.diag([1.2, 0.9, 0.9]), np.array(1.0), p)
    M = ellipsoidal_maxwellian(st, cell_grid)
    back = compute_moments(M, cell_grid)
    # the Maxwellian's own covariance is the corrected tensor
    assert np.allclose(back.Theta, np.diag([1.1, 0.95, 0.95]), atol=1e-12)


def test_spd_violation(cell_grid):
    st = compute_moments(global_maxwellian(cell_grid), cell_grid)
    st.TensT = np.diag([1.0, -0.1, 1.0])
    with pytest.raises(SPDError):
        ellipsoidal_maxwellian(st, cell_grid)
    st = compute_moments(global_maxwellian(cell_grid), cell_grid)
    st.T_theta = np.array(-1.0)
    with pytest.raises(SPDError):
        maxwellian_factors(st, cell_grid)


def test_match_fixed_point(cell_grid):
    m = global_maxwellian(cell_grid)
    out = moment_match(m, collision_invariants(m, cell_grid), cell_grid)
    assert np.max(np.abs(out - m)) <= 1e-13 * np.max(m)


def test_match_mass_perturbation(cell_grid):
    # first-order Newton step: only the constant tilt moves, a = log(1 + 1e-6)
    m = global_maxwellian(cell_grid)
    t = collision_invariants(m, cell_grid)
    target = MomentTarget(t.mass * (1 + 1e-6), t.momentum, t.energy * (1 + 1e-6))
    out = moment_match(m, target, cell_grid)
    # recover the tilt coefficients (a, b, c) from log(out / m) by least squares
    v = np.broadcast_to(cell_grid.vel[..., None, :], cell_grid.cell_shape + (3,)).reshape(-1, 3)
    e = (0.5 * np.sum(cell_grid.vel**2, -1)[..., None] + cell_grid.y_nodes).reshape(-1)
    X = np.column_stack([np.ones(len(e)), v, e])
    coef = np.linalg.lstsq(X, np.log(out / m).reshape(-1), rcond=None)[0]
    assert coef[0] == pytest.approx(math.log1p(1e-6), abs=1e-12)
    assert np.max(np.abs(coef[1:])) <= 1e-12
    got = collision_invariants(out, cell_grid).as_array()
    assert np.max(np.abs(got - target.as_array())) <= 1e-13 * target.mass


def test_match_general_and_separable_agree(cell_grid):
    st = compute_moments(global_maxwellian(cell_grid), cell_grid)
    st.U = np.array([0.2, -0.1, 0.05])
    Mv, MI = maxwellian_factors(st, cell_grid)
    target = MomentTarget(1.01, [0.19, -0.1, 0.06], 2.6)
    full = moment_match(Mv[..., None] * MI, target, cell_grid)
    gv, gI = moment_match_factors(Mv, MI, target, cell_grid)
    assert np.max(np.abs(full - gv[..., None] * gI)) <= 1e-13
    got = collision_invariants(full, cell_grid).as_array()
    assert np.max(np.abs(got - target.as_array())) <= 1e-13 * 2.6


def test_match_rejects_bad_input(cell_grid):
    m = global_maxwellian(cell_grid)
    t = collision_invariants(m, cell_grid)
    with pytest.raises(InvalidFieldError):
        moment_match(np.zeros_like(m), t, cell_grid)
    with pytest.raises(InvalidFieldError):
        MomentTarget(-1.0, [0, 0, 0], 1.0)
    with pytest.raises(InvalidFieldError):
        MomentTarget(1.0, [np.nan, 0, 0], 1.0)
    # energy below the kinetic part of the momentum: no Maxwellian matches this
    with pytest.raises(MomentMatchError):
        moment_match(m, MomentTarget(1.0, [3.0, 0, 0], 1.0), cell_grid)


def test_h_functional(cell_grid):
    d = cell_grid.delta
    m = global_maxwellian(cell_grid)
    # int m ln m = ln(Lambda (2 pi)^-3/2) - 3/2 - delta/2, evaluated in closed form
    exact = math.log(cell_grid.lam * (2 * math.pi) ** -1.5) - 1.5 - d / 2
    assert h_functional(m, cell_grid) == pytest.approx(exact, abs=1e-12)
    fine = build_grid(cell_grid.params, nx=4, nv=48, ni=64)
    assert h_functional(global_maxwellian(fine), fine) == pytest.approx(h_functional(m, cell_grid), abs=1e-12)
    mass = float(np.sum(m * cell_grid.weights))
    assert h_functional(2 * m, cell_grid) == pytest.approx(2 * h_functional(m, cell_grid) + 2 * math.log(2) * mass,
                                                        abs=1e-13)
    z = m.copy()
    z[0, 0, 0, 0] = 0.0
    assert math.isfinite(h_functional(z, cell_grid))
    with pytest.raises(InvalidFieldError):
        h_functional(-m, cell_grid)


def test_h_includes_dx_for_full_fields(small_grid):
    m = global_maxwellian(small_grid)
    F = np.broadcast_to(m, small_grid.shape)
    assert h_functional(F, small_grid) == pytest.approx(small_grid.length * h_functional(m, small_grid), rel=1e-13)
