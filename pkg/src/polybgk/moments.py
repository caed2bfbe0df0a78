"""Macroscopic fields of a distribution F(x, v, I).

All routines accept arrays with arbitrary leading axes in front of the cell
block ``(nv, nv, nv, ni)`` and return fields with those leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import ModelParams, PhaseGrid


class InvalidFieldError(ValueError):
    """Non-physical macroscopic state (rho <= 0, non-finite moments, ...)."""


_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2))


@dataclass
class MacroState:
    rho: np.ndarray
    U: np.ndarray
    Theta: np.ndarray
    E: np.ndarray
    E_kin: np.ndarray
    E_tr: np.ndarray
    E_Idelta: np.ndarray
    T_delta: np.ndarray
    T_tr: np.ndarray
    T_Idelta: np.ndarray
    T_theta: np.ndarray
    TensT: np.ndarray
    A_freq: np.ndarray

    @property
    def E_delta(self):
        return self.E_tr + self.E_Idelta


def velocity_features(grid: PhaseGrid) -> np.ndarray:
    """Weighted velocity monomials (1, v_i, v_i v_j) as a (nv^3, 10) table."""
    v = grid.vel.reshape(-1, 3)
    cols = [np.ones(len(v)), v[:, 0], v[:, 1], v[:, 2]]
    cols += [v[:, i] * v[:, j] for i, j in _PAIRS]
    return np.stack(cols, axis=1) * grid.w_v.reshape(-1, 1)


def raw_moments(F: np.ndarray, grid: PhaseGrid):
    """Return (rho, rho*U, S_ij = int v_i v_j F, E_I = int I^(2/delta) F)."""
    F = np.asarray(F, dtype=float)
    lead = F.shape[: F.ndim - 4]
    flat = F.reshape((-1, grid.nv**3, grid.ni))
    wI = np.stack([grid.w_I, grid.w_I * grid.y_nodes], axis=1)
    G = flat @ wI  # (L, nv^3, 2)
    mv = np.einsum("lk,kc->lc", G[..., 0], velocity_features(grid))
    E_I = G[..., 1] @ grid.w_v.reshape(-1)
    rho = mv[:, 0]
    mom = mv[:, 1:4]
    S = np.empty((len(rho), 3, 3))
    for c, (i, j) in enumerate(_PAIRS):
        S[:, i, j] = S[:, j, i] = mv[:, 4 + c]
    return (rho.reshape(lead), mom.reshape(lead + (3,)),
            S.reshape(lead + (3, 3)), E_I.reshape(lead))


def compute_moments(F: np.ndarray, grid: PhaseGrid, params: ModelParams | None = None) -> MacroState:
    params = grid.params if params is None else params
    rho, mom, S, E_I = raw_moments(F, grid)
    if not np.all(np.isfinite(rho)) or np.any(rho <= 0):
        raise InvalidFieldError(f"non-positive or non-finite density (min rho = {np.min(rho)!r})")
    return state_from_moments(rho, mom, S, E_I, params)


def state_from_moments(rho, mom, S, E_I, params: ModelParams) -> MacroState:
    nu, theta, delta = params.nu, params.theta, params.delta
    U = mom / rho[..., None]
    Theta = S / rho[..., None, None] - U[..., :, None] * U[..., None, :]
    E_kin = 0.5 * rho * np.sum(U * U, axis=-1)
    E_tr = 0.5 * rho * np.trace(Theta, axis1=-2, axis2=-1)
    E = E_kin + E_tr + E_I
    T_tr = 2.0 * E_tr / (3.0 * rho)
    T_I = 2.0 * E_I / (delta * rho)
    T_delta = 3.0 / (3.0 + delta) * T_tr + delta / (3.0 + delta) * T_I
    T_theta = theta * T_delta + (1.0 - theta) * T_I
    eye = np.eye(3)
    iso = (theta * T_delta + (1.0 - theta) * (1.0 - nu) * T_tr)[..., None, None]
    TensT = iso * eye + (1.0 - theta) * nu * Theta
    A_freq = rho * T_delta / params.freq_denominator
    return MacroState(rho, U, Theta, E, E_kin, E_tr, E_I, T_delta, T_tr, T_I, T_theta, TensT, A_freq)


def sym3_eigvalsh(A: np.ndarray, threshold: float = 1e-12) -> np.ndarray:
    """Ascending eigenvalues of symmetric 3x3 matrices (trigonometric closed form).

    Matrices whose deviatoric part is below ``threshold`` (relative) are
    handed to cyclic Jacobi iteration instead.
    """
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise InvalidFieldError("non-finite tensor entries")
    lead = A.shape[:-2]
    A = A.reshape(-1, 3, 3)
    q = np.trace(A, axis1=1, axis2=2) / 3.0
    p1 = A[:, 0, 1] ** 2 + A[:, 0, 2] ** 2 + A[:, 1, 2] ** 2
    p2 = (A[:, 0, 0] - q) ** 2 + (A[:, 1, 1] - q) ** 2 + (A[:, 2, 2] - q) ** 2 + 2.0 * p1
    scale = np.maximum(np.max(np.abs(A), axis=(1, 2)), np.finfo(float).tiny)
    small = p2 <= threshold * scale**2
    out = np.empty((len(A), 3))
    ok = ~small
    if np.any(ok):
        p = np.sqrt(p2[ok] / 6.0)
        B = (A[ok] - q[ok, None, None] * np.eye(3)) / p[:, None, None]
        r = np.clip(np.linalg.det(B) / 2.0, -1.0, 1.0)
        phi = np.arccos(r) / 3.0
        e1 = q[ok] + 2.0 * p * np.cos(phi)
        e3 = q[ok] + 2.0 * p * np.cos(phi + 2.0 * math.pi / 3.0)
        e2 = 3.0 * q[ok] - e1 - e3
        out[ok] = np.stack([e3, e2, e1], axis=1)
    for k in np.flatnonzero(small):
        out[k] = np.sort(_jacobi_eigvals(A[k]))
    return out.reshape(lead + (3,))


def _jacobi_eigvals(a: np.ndarray, sweeps: int = 50) -> np.ndarray:
    a = a.copy()
    for _ in range(sweeps):
        off = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
        if off <= 1e-30 * max(np.sum(a * a), 1e-300):
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            if a[p, q] == 0.0:
                continue
            tau = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
            t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
            c = 1.0 / math.sqrt(1.0 + t * t)
            s = t * c
            R = np.eye(3)
            R[p, p] = R[q, q] = c
            R[p, q] = s
            R[q, p] = -s
            a = R.T @ a @ R
    return np.diag(a).copy()


def spd3_inverse(A: np.ndarray):
    """Inverse and determinant of symmetric 3x3 matrices via the adjugate."""
    a, b, c = A[..., 0, 0], A[..., 0, 1], A[..., 0, 2]
    d, e, f = A[..., 1, 1], A[..., 1, 2], A[..., 2, 2]
    c00 = d * f - e * e
    c01 = c * e - b * f
    c02 = b * e - c * d
    det = a * c00 + b * c01 + c * c02
    inv = np.empty(A.shape)
    inv[..., 0, 0] = c00
    inv[..., 0, 1] = inv[..., 1, 0] = c01
    inv[..., 0, 2] = inv[..., 2, 0] = c02
    inv[..., 1, 1] = a * f - c * c
    inv[..., 1, 2] = inv[..., 2, 1] = b * c - a * e
    inv[..., 2, 2] = a * d - b * b
    return inv / det[..., None, None], det


def check_tensor_spd(state: MacroState) -> np.ndarray:
    """Smallest eigenvalue of the corrected temperature tensor, per cell."""
    return sym3_eigvalsh(state.TensT)[..., 0]
