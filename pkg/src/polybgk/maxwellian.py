"""Polyatomic ellipsoidal Maxwellian, discrete moment matching and the H-functional."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import PhaseGrid
from .moments import InvalidFieldError, MacroState, raw_moments, spd3_inverse, sym3_eigvalsh

NEWTON_MAXITER = 50
MATCH_RTOL = 1e-13


class SPDError(InvalidFieldError):
    """Temperature tensor or relaxation temperature lost positivity."""


class MomentMatchError(RuntimeError):
    """Newton iteration for the moment correction did not converge."""


@dataclass
class MomentTarget:
    """Discrete collision invariants int F (1, v, |v|^2/2 + I^(2/delta))."""

    mass: np.ndarray
    momentum: np.ndarray
    energy: np.ndarray

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        self.momentum = np.asarray(self.momentum, dtype=float)
        self.energy = np.asarray(self.energy, dtype=float)
        if not (np.all(np.isfinite(self.mass)) and np.all(np.isfinite(self.momentum))
                and np.all(np.isfinite(self.energy))):
            raise InvalidFieldError("non-finite moment target")
        if np.any(self.mass <= 0):
            raise InvalidFieldError("moment target must have positive mass")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.mass[..., None], self.momentum, self.energy[..., None]], axis=-1)


def collision_invariants(F: np.ndarray, grid: PhaseGrid) -> MomentTarget:
    rho, mom, S, E_I = raw_moments(F, grid)
    return MomentTarget(rho, mom, 0.5 * np.trace(S, axis1=-2, axis2=-1) + E_I)


def maxwellian_factors(state: MacroState, grid: PhaseGrid):
    """Velocity and internal-energy factors (Mv, MI) with M = Mv (x) MI.

    ``Mv`` has shape ``lead + (nv, nv, nv)`` and ``MI`` has ``lead + (ni,)``.
    """
    lam_min = sym3_eigvalsh(state.TensT)[..., 0]
    T_theta = np.asarray(state.T_theta)
    if np.any(lam_min <= 0) or np.any(T_theta <= 0):
        raise SPDError(f"ellipsoidal Maxwellian undefined: min eig {np.min(lam_min)!r}, "
                       f"min T_theta {np.min(T_theta)!r}")
    delta = grid.delta
    inv, det = spd3_inverse(state.TensT)
    lead = np.shape(state.rho)
    c = (np.asarray(state.rho) * grid.lam / (np.sqrt((2.0 * math.pi) ** 3 * det) * T_theta ** (delta / 2.0)))
    d = grid.vel.reshape((1,) * len(lead) + grid.vel.shape) - np.reshape(state.U, lead + (1, 1, 1, 3))
    inv = inv.reshape(lead + (1, 1, 1, 3, 3))
    quad = sum(inv[..., i, i] * d[..., i] ** 2 for i in range(3))
    quad = quad + 2.0 * sum(inv[..., i, j] * d[..., i] * d[..., j] for i, j in ((0, 1), (0, 2), (1, 2)))
    Mv = np.reshape(c, lead + (1, 1, 1)) * np.exp(-0.5 * quad)
    MI = np.exp(-np.multiply.outer(1.0 / T_theta, grid.y_nodes))
    return Mv, MI


def ellipsoidal_maxwellian(state: MacroState, grid: PhaseGrid) -> np.ndarray:
    Mv, MI = maxwellian_factors(state, grid)
    return Mv[..., None] * MI[..., None, None, None, :]


def _invariant_table(grid: PhaseGrid) -> np.ndarray:
    v = grid.vel
    e = 0.5 * np.sum(v * v, axis=-1)[..., None] + grid.y_nodes
    ones = np.ones(grid.cell_shape)
    return np.stack([ones, np.broadcast_to(v[..., 0, None], grid.cell_shape),
                     np.broadcast_to(v[..., 1, None], grid.cell_shape),
                     np.broadcast_to(v[..., 2, None], grid.cell_shape), e])


def _newton(moments_and_jac, target: np.ndarray, what: str):
    lam = np.zeros(target.shape)
    scale = np.maximum(np.abs(target[..., 0]), np.abs(target[..., 4]))
    prev = np.inf
    for _ in range(NEWTON_MAXITER):
        # a diverging iterate overflows; that is reported below as non-convergence
        with np.errstate(over="ignore", invalid="ignore"):
            mom, jac = moments_and_jac(lam)
        resid = mom - target
        rel = float(np.max(np.abs(resid) / scale[..., None]))
        if not math.isfinite(rel):
            break
        if rel <= 1e-15 or (rel <= MATCH_RTOL and rel > 0.5 * prev):
            return lam, rel
        prev = rel
        try:
            lam = lam - np.linalg.solve(jac, resid[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
    if math.isfinite(rel) and rel <= MATCH_RTOL:
        return lam, rel
    raise MomentMatchError(f"{what}: Newton did not reach {MATCH_RTOL:g} (relative residual {rel:.3e})")


def moment_match(Mraw: np.ndarray, target: MomentTarget, grid: PhaseGrid) -> np.ndarray:
    """Tilt ``Mraw`` by exp(a + b.v + c(|v|^2/2 + I^(2/delta))) to hit ``target``."""
    Mraw = np.asarray(Mraw, dtype=float)
    if np.any(Mraw <= 0):
        raise InvalidFieldError("moment_match requires a strictly positive input")
    phi = _invariant_table(grid)
    wphi = phi * grid.weights
    lead = Mraw.shape[:-4]
    pairs = np.einsum("k...,l...->kl...", phi, wphi)

    def moments_and_jac(lam):
        Mt = Mraw * np.exp(np.tensordot(lam, phi, axes=([-1], [0])))
        flat = Mt.reshape(lead + (-1,))
        mom = flat @ wphi.reshape(5, -1).T
        jac = flat @ pairs.reshape(25, -1).T
        return mom, jac.reshape(lead + (5, 5))

    lam, _ = _newton(moments_and_jac, target.as_array(), "moment_match")
    return Mraw * np.exp(np.tensordot(lam, phi, axes=([-1], [0])))


def _velocity_tilt_table(grid: PhaseGrid) -> tuple[np.ndarray, np.ndarray]:
    v = grid.vel.reshape(-1, 3)
    e = 0.5 * np.sum(v * v, axis=1)
    cols = [np.ones(len(v)), v[:, 0], v[:, 1], v[:, 2], e]
    cols += [v[:, i] * v[:, j] for i in range(3) for j in range(3)]
    cols += [v[:, 0] * e, v[:, 1] * e, v[:, 2] * e, e * e]
    feat = np.stack(cols, axis=1) * grid.w_v.reshape(-1, 1)
    return np.stack([v[:, 0], v[:, 1], v[:, 2], e], axis=1), feat


def moment_match_factors(Mv: np.ndarray, MI: np.ndarray, target: MomentTarget, grid: PhaseGrid):
    """Moment matching for a separable Maxwellian ``Mv (x) MI``.

    Same tilt as :func:`moment_match`; the tilt is separable too, so only
    velocity- and energy-space sums are needed.
    """
    lead = MI.shape[:-1]
    Mv = Mv.reshape(lead + (-1,))
    basis, feat = _velocity_tilt_table(grid)
    y = grid.y_nodes
    featI = np.stack([grid.w_I, grid.w_I * y, grid.w_I * y * y], axis=1)

    def factors(lam):
        gv = Mv * np.exp(lam[..., 1:] @ basis.T)
        gI = MI * np.exp(lam[..., 4:5] * y)
        return np.exp(lam[..., 0])[..., None] * gv, gI

    def moments_and_jac(lam):
        gv, gI = factors(lam)
        V = gv @ feat
        I0, Iy, Iyy = np.moveaxis(gI @ featI, -1, 0)
        V1, Vv, Ve = V[..., 0], V[..., 1:4], V[..., 4]
        Vvv = V[..., 5:14].reshape(lead + (3, 3))
        Vve, Vee = V[..., 14:17], V[..., 17]
        mom = np.concatenate([(V1 * I0)[..., None], Vv * I0[..., None],
                              (Ve * I0 + V1 * Iy)[..., None]], axis=-1)
        jac = np.empty(lead + (5, 5))
        jac[..., 0, 0] = V1 * I0
        jac[..., 0, 1:4] = jac[..., 1:4, 0] = Vv * I0[..., None]
        jac[..., 0, 4] = jac[..., 4, 0] = Ve * I0 + V1 * Iy
        jac[..., 1:4, 1:4] = Vvv * I0[..., None, None]
        jac[..., 1:4, 4] = jac[..., 4, 1:4] = Vve * I0[..., None] + Vv * Iy[..., None]
        jac[..., 4, 4] = Vee * I0 + 2.0 * Ve * Iy + V1 * Iyy
        return mom, jac

    lam, _ = _newton(moments_and_jac, target.as_array(), "moment_match")
    gv, gI = factors(lam)
    return gv.reshape(lead + grid.cell_shape[:3]), gI


def h_functional(F: np.ndarray, grid: PhaseGrid) -> float:
    """Discrete H = sum w F ln F (times dx when F carries the x axis)."""
    F = np.asarray(F, dtype=float)
    if np.any(F < 0):
        raise InvalidFieldError(f"H-functional needs F >= 0 (min F = {np.min(F)!r})")
    with np.errstate(divide="ignore", invalid="ignore"):
        flogf = np.where(F > 0, F * np.log(np.where(F > 0, F, 1.0)), 0.0)
    lead = F.shape[:-4]
    total = float(np.sum(flogf.reshape(lead + (-1,)) @ grid.weights.reshape(-1)))
    return total * grid.dx if F.ndim == 5 else total
