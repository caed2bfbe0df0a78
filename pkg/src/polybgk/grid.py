"""Discrete phase space (x, v, I) for the 1-D periodic polyatomic BGK problem.

Fields live on arrays of shape ``(nx, nv, nv, nv, ni)``; a single spatial cell
is the trailing ``(nv, nv, nv, ni)`` block.  Velocity uses the trapezoid rule
on ``[-v_max, v_max]`` per axis.  The internal-energy variable is integrated in
``y = I**(2/delta)``: by default a generalized Gauss-Laguerre rule (weight
``y**(delta/2 - 1) exp(-y)``, no truncation), or optionally a Gauss-Jacobi
rule truncated at ``I_max``.  Both absorb the ``y**(delta/2 - 1)`` Jacobian and
never place a node at ``I = 0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

# exp(-TAIL_EXPONENT) ~ 1e-12; both v_max**2/2 and I_max**(2/delta) must reach it
TAIL_EXPONENT = 27.6
DEFAULT_V_MAX = 8.0
TOL_QUAD = 1e-8


class GridError(ValueError):
    """Invalid grid descriptor or model parameters."""


@dataclass(frozen=True)
class ModelParams:
    nu: float
    theta: float
    delta: float

    def __post_init__(self):
        if not (-0.5 < self.nu < 1.0):
            raise GridError(f"nu must lie in (-1/2, 1), got {self.nu}")
        if not (0.0 <= self.theta <= 1.0):
            raise GridError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.delta > 0.0:
            raise GridError(f"delta must be positive, got {self.delta}")

    @property
    def freq_denominator(self) -> float:
        """The factor 1 - nu + theta*nu dividing the collision frequency."""
        return 1.0 - self.nu + self.theta * self.nu


def lambda_delta(delta: float) -> float:
    """Normalizing factor ``1 / int_0^inf exp(-I**(2/delta)) dI``."""
    if not delta > 0:
        raise GridError(f"delta must be positive, got {delta}")
    integrand = lambda s: math.exp(-(s ** (2.0 / delta)))
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            for lo, hi in ((0.0, 1.0), (1.0, np.inf)):
                val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-12, limit=500)
                total += val
        except integrate.IntegrationWarning as exc:
            raise GridError(f"quadrature for Lambda_delta did not converge (delta={delta}): {exc}") from None
    return 1.0 / total


@dataclass(frozen=True, eq=False)
class PhaseGrid:
    params: ModelParams
    length: float
    x_nodes: np.ndarray
    v_nodes: np.ndarray
    I_nodes: np.ndarray
    y_nodes: np.ndarray
    w_v1: np.ndarray
    w_I: np.ndarray
    v_max: float
    i_max: float
    lam: float
    i_rule: str = "laguerre"
    w_v: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    vel: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w3 = np.einsum("i,j,k->ijk", self.w_v1, self.w_v1, self.w_v1)
        object.__setattr__(self, "w_v", w3)
        object.__setattr__(self, "weights", w3[..., None] * self.w_I)
        vx, vy, vz = np.meshgrid(self.v_nodes, self.v_nodes, self.v_nodes, indexing="ij")
        object.__setattr__(self, "vel", np.stack([vx, vy, vz], axis=-1))
        for arr in (self.x_nodes, self.v_nodes, self.I_nodes, self.y_nodes,
                    self.w_v1, self.w_I, self.w_v, self.weights, self.vel):
            arr.setflags(write=False)

    @property
    def nx(self) -> int:
        return self.x_nodes.size

    @property
    def nv(self) -> int:
        return self.v_nodes.size

    @property
    def ni(self) -> int:
        return self.I_nodes.size

    @property
    def dx(self) -> float:
        return self.length / self.nx

    @property
    def dv(self) -> float:
        return float(self.v_nodes[1] - self.v_nodes[0])

    @property
    def cell_shape(self) -> tuple[int, int, int, int]:
        return (self.nv, self.nv, self.nv, self.ni)

    @property
    def shape(self) -> tuple[int, int, int, int, int]:
        return (self.nx,) + self.cell_shape

    @property
    def delta(self) -> float:
        return self.params.delta

    def with_params(self, params: ModelParams) -> "PhaseGrid":
        """Same nodes, different (nu, theta); delta must match."""
        if params.delta != self.params.delta:
            raise GridError("changing delta requires rebuilding the internal-energy grid")
        return PhaseGrid(params, self.length, self.x_nodes, self.v_nodes, self.I_nodes,
                         self.y_nodes, self.w_v1, self.w_I, self.v_max, self.i_max, self.lam,
                         self.i_rule)

    def descriptor(self) -> dict:
        return {"nx": self.nx, "nv": self.nv, "ni": self.ni, "v_max": self.v_max,
                "i_max": self.i_max, "length": self.length, "i_rule": self.i_rule}


def _laguerre_energy_rule(ni: int, delta: float):
    alpha = delta / 2.0 - 1.0
    y, w = special.roots_genlaguerre(ni, alpha)
    return y, (delta / 2.0) * w * np.exp(y)


def _jacobi_energy_rule(ni: int, delta: float, y_max: float):
    # int_0^ymax g(y) (delta/2) y^(delta/2-1) dy  ==  int_0^Imax h(I) dI
    alpha = delta / 2.0 - 1.0
    x, w = special.roots_jacobi(ni, 0.0, alpha)
    y = 0.5 * y_max * (1.0 + x)
    w_I = w * (0.5 * y_max) ** (alpha + 1.0) * (delta / 2.0)
    return y, w_I


def build_grid(
    params: ModelParams,
    nx: int = 32,
    nv: int = 24,
    ni: int = 32,
    v_max: float | None = None,
    i_max: float | None = None,
    length: float = 2.0 * math.pi,
    i_rule: str = "laguerre",
) -> PhaseGrid:
    """Construct the tensor phase grid.

    ``v_max``/``i_max`` of ``None`` select the defaults 8 and 27.6**(delta/2).
    Extents whose Gaussian tails exceed exp(-27.6) are rejected.  ``i_max``
    truncates the energy axis only for ``i_rule="jacobi"``; the Laguerre rule
    covers (0, inf) and reports its largest node as ``i_max``.
    """
    if i_rule not in ("laguerre", "jacobi"):
        raise GridError(f"unknown i_rule {i_rule!r}")
    for name, n in (("nx", nx), ("nv", nv), ("ni", ni)):
        if int(n) != n or n < 4:
            raise GridError(f"{name} must be an integer >= 4, got {n}")
    if not length > 0:
        raise GridError(f"length must be positive, got {length}")
    delta = params.delta
    i_max_arg = i_max
    v_max = DEFAULT_V_MAX if v_max is None else float(v_max)
    i_max = TAIL_EXPONENT ** (delta / 2.0) if i_max is None else float(i_max)
    if not (v_max > 0 and 0.5 * v_max**2 >= TAIL_EXPONENT):
        raise GridError(f"v_max={v_max} violates the tail criterion exp(-v_max^2/2) <= exp(-{TAIL_EXPONENT})")
    y_max = i_max ** (2.0 / delta) if i_max > 0 else 0.0
    if not y_max >= TAIL_EXPONENT * (1 - 1e-12):
        raise GridError(f"i_max={i_max} violates the tail criterion exp(-i_max^(2/delta)) <= exp(-{TAIL_EXPONENT})")

    x_nodes = np.arange(nx) * (length / nx)
    v_nodes = np.linspace(-v_max, v_max, nv)
    h = v_nodes[1] - v_nodes[0]
    w_v1 = np.full(nv, h)
    w_v1[0] = w_v1[-1] = 0.5 * h
    if i_rule == "jacobi":
        y_nodes, w_I = _jacobi_energy_rule(ni, delta, y_max)
    else:
        if i_max_arg is not None:
            raise GridError("i_max only applies to the truncated (jacobi) energy rule")
        y_nodes, w_I = _laguerre_energy_rule(ni, delta)
        i_max = float(y_nodes[-1] ** (delta / 2.0))
    I_nodes = y_nodes ** (delta / 2.0)

    grid = PhaseGrid(params, float(length), x_nodes, v_nodes, I_nodes, y_nodes,
                     w_v1, w_I, v_max, i_max, lambda_delta(delta), i_rule)
    if not (np.all(grid.weights > 0) and np.all(w_I > 0)):
        raise GridError("non-positive quadrature weight")
    mass = float(np.sum(grid.weights * global_maxwellian(grid)))
    if abs(mass - 1.0) > TOL_QUAD:
        raise GridError(f"grid under-resolves the global Maxwellian: discrete mass {mass!r}")
    return grid


def global_maxwellian(grid: PhaseGrid) -> np.ndarray:
    """m(v, I) on one spatial cell, shape ``grid.cell_shape``."""
    v2 = np.sum(grid.vel**2, axis=-1)
    mv = grid.lam * (2.0 * math.pi) ** -1.5 * np.exp(-0.5 * v2)
    return mv[..., None] * np.exp(-grid.y_nodes)


def inner_product(a: np.ndarray, b: np.ndarray, grid: PhaseGrid) -> float | np.ndarray:
    """Discrete L2(v, I) inner product; leading axes of ``a``/``b`` are kept.

    The product ``a*b`` is formed before weighting so the result is exactly
    symmetric in its arguments.
    """
    prod = np.asarray(a) * np.asarray(b)
    lead = prod.shape[: prod.ndim - 4]
    out = prod.reshape(lead + (-1,)) @ grid.weights.reshape(-1)
    return float(out) if not lead else out


def norm(a: np.ndarray, grid: PhaseGrid) -> float | np.ndarray:
    return np.sqrt(inner_product(a, a, grid))
