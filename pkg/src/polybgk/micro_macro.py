"""Macroscopic coefficients of a perturbation and the macro/micro control ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import ModelParams
from .linearized import ProjectionBasis
from .solver import x_derivative

DENOM_FLOOR = 1e-14


@dataclass
class MacroCoeffs:
    """Per-cell coefficients; ``d`` is None when theta > 0.

    For theta > 0, ``c`` multiplies the combined-energy mode.  For theta = 0 it
    multiplies the translational mode and ``d`` the internal one.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray | None = None

    @property
    def a_tilde(self):
        return self.a - 3.0 / math.sqrt(6.0) * self.c

    @property
    def c_tilde(self):
        return self.c / math.sqrt(6.0)

    @staticmethod
    def untilde(a_tilde, c_tilde):
        """Inverse of the substitution: returns (a, c)."""
        c = math.sqrt(6.0) * c_tilde
        return a_tilde + 3.0 / math.sqrt(6.0) * c, c

    def squared_sum(self):
        total = self.a**2 + np.sum(self.b**2, axis=-1) + self.c**2
        return total if self.d is None else total + self.d**2


def macro_projection(params: ModelParams) -> str:
    return "P_p" if params.theta > 0 else "P_m"


def extract_coeffs(f: np.ndarray, params: ModelParams, basis: ProjectionBasis) -> MacroCoeffs:
    coef = basis.coefficients(macro_projection(params), f)
    d = coef[..., 5] if params.theta == 0 else None
    return MacroCoeffs(coef[..., 0], coef[..., 1:4], coef[..., 4], d)


def _derivative_norms(f: np.ndarray, basis: ProjectionBasis, which: str, dx: float, order: int):
    macro = micro = 0.0
    for k in range(order + 1):
        d = x_derivative(f, dx, k)
        P = basis.project(which, d)
        macro += float(np.sum(basis.sq(P))) * dx
        micro += float(np.sum(basis.sq(d - P))) * dx
    return macro, micro


def control_ratio(trajectory, params: ModelParams, basis: ProjectionBasis, deriv_order: int = 2) -> np.ndarray:
    """R(t) = sum ||P d^a f||^2 / sum ||(I-P) d^a f||^2 for each f in ``trajectory``.

    P is P_p for theta > 0 and P_m for theta = 0.  A microscopic part below
    the floor gives inf when the macroscopic part is resolved and nan when
    both vanish.
    """
    if deriv_order not in (0, 1, 2):
        raise ValueError(f"derivative order must be 0, 1 or 2, got {deriv_order}")
    which = macro_projection(params)
    dx = basis.grid.dx
    out = []
    for f in trajectory:
        macro, micro = _derivative_norms(np.asarray(f), basis, which, dx, deriv_order)
        if micro > DENOM_FLOOR:
            out.append(macro / micro)
        else:
            out.append(math.inf if macro > DENOM_FLOOR else math.nan)
    return np.array(out)


def instantaneous_norm(f: np.ndarray, basis: ProjectionBasis, deriv_order: int = 2) -> float:
    """sum_{k <= N} ||d_x^k f||^2 over x, v and I."""
    dx = basis.grid.dx
    return sum(float(np.sum(basis.sq(x_derivative(f, dx, k)))) * dx for k in range(deriv_order + 1))


def energy_functional(trajectory, times, basis: ProjectionBasis, deriv_order: int = 2) -> np.ndarray:
    """E(t) = 1/2 S(t) + int_0^t S(s) ds with S the instantaneous norm.

    The time integral uses the trapezoid rule over the sampled trajectory.
    """
    S = [instantaneous_norm(np.asarray(f), basis, deriv_order) for f in trajectory]
    return accumulate_energy(S, times)


def accumulate_energy(S, times) -> np.ndarray:
    """1/2 S(t) + trapezoid integral of S from the first sample to t."""
    S = np.asarray(S, dtype=float)
    times = np.asarray(times, dtype=float)
    if S.shape != times.shape:
        raise ValueError("norm series and times differ in length")
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (S[1:] + S[:-1]) * np.diff(times))])
    return 0.5 * S + integral
