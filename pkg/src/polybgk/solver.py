"""Time integration: finite-volume transport in x split with relaxation toward M~.

The relaxation substep freezes the collision frequency kappa = rho T_delta /
(1 - nu + theta nu) and the moment-matched Maxwellian M~ over the step.  Two
updates are available:

* ``"exponential"`` (default): F' = e^{-kappa dt} F + (1 - e^{-kappa dt}) M~,
  exact for the frozen-coefficient ODE;
* ``"implicit"``: F' = (F + dt kappa M~) / (1 + dt kappa), first order.

Both are convex combinations, so F' >= 0 whenever F >= 0 for any dt.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .grid import ModelParams, PhaseGrid, global_maxwellian
from .maxwellian import (
    MomentTarget,
    collision_invariants,
    h_functional,
    maxwellian_factors,
    moment_match_factors,
)
from .moments import InvalidFieldError, check_tensor_spd, compute_moments, raw_moments, state_from_moments

CSV_HEADER = ("t", "mass", "mom1", "mom2", "mom3", "energy", "H", "Enorm", "minF", "lamMin")


class CFLError(ValueError):
    """Transport time step exceeds the CFL bound."""


class SolverAbort(RuntimeError):
    """A step failed; ``diagnostics`` holds the rows recorded before the failure."""

    def __init__(self, message: str, diagnostics: "Diagnostics", step: int):
        super().__init__(message)
        self.diagnostics = diagnostics
        self.step = step


@dataclass(frozen=True)
class SolverConfig:
    t_end: float
    cfl: float = 0.9
    steps: int | None = None
    output_every: int = 1
    splitting: int = 2
    limiter: str = "minmod"
    relaxation: str = "exponential"
    deriv_order: int = 2

    def __post_init__(self):
        if not (0.0 < self.cfl <= 0.9):
            raise ValueError(f"cfl must lie in (0, 0.9], got {self.cfl}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.steps is not None and (int(self.steps) != self.steps or self.steps < 1):
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        if int(self.output_every) != self.output_every or self.output_every < 1:
            raise ValueError(f"output_every must be a positive integer, got {self.output_every}")
        if self.splitting not in (1, 2):
            raise ValueError(f"splitting must be 1 (Lie) or 2 (Strang), got {self.splitting}")
        if self.limiter not in _kernels.LIMITERS:
            raise ValueError(f"limiter must be one of {sorted(_kernels.LIMITERS)}, got {self.limiter!r}")
        if self.relaxation not in ("exponential", "implicit"):
            raise ValueError(f"relaxation must be 'exponential' or 'implicit', got {self.relaxation!r}")
        if self.deriv_order not in (0, 1, 2):
            raise ValueError(f"deriv_order must be 0, 1 or 2, got {self.deriv_order}")

    def time_step(self, grid: PhaseGrid) -> tuple[float, int]:
        """(dt, n_steps) with dt = min(CFL bound, t_end/steps) and n_steps * dt = t_end."""
        dt_cfl = self.cfl * grid.dx / grid.v_max
        dt = dt_cfl if self.steps is None else min(dt_cfl, self.t_end / self.steps)
        n = max(1, math.ceil(self.t_end / dt * (1.0 - 1e-12)))
        return self.t_end / n, n


@dataclass
class Diagnostics:
    t: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    mom1: list = field(default_factory=list)
    mom2: list = field(default_factory=list)
    mom3: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    H: list = field(default_factory=list)
    Enorm: list = field(default_factory=list)
    minF: list = field(default_factory=list)
    lamMin: list = field(default_factory=list)

    def append(self, **row):
        if self.t and row["t"] < self.t[-1]:
            raise ValueError("diagnostic times must be non-decreasing")
        for name in CSV_HEADER:
            getattr(self, name).append(float(row[name]))

    def __len__(self):
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name))

    def invariants(self) -> np.ndarray:
        """(rows, 5) array of mass, momentum, energy."""
        return np.stack([self.column(n) for n in ("mass", "mom1", "mom2", "mom3", "energy")], axis=1)

    def conservation_drift(self) -> np.ndarray:
        """Largest relative drift of each invariant from its first value.

        Momentum is normalized by sqrt(2 * mass * energy), its natural scale,
        since its own initial value is often zero.
        """
        inv = self.invariants()
        ref = inv[0]
        scale = np.abs(ref.copy())
        scale[1:4] = math.sqrt(2.0 * abs(ref[0]) * abs(ref[4]))
        return np.max(np.abs(inv - ref), axis=0) / scale

    def write_csv(self, path, extra: dict | None = None):
        extra = extra or {}
        names = list(CSV_HEADER) + list(extra)
        cols = [self.column(n) for n in CSV_HEADER] + [np.asarray(v, dtype=float) for v in extra.values()]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for row in zip(*cols):
                w.writerow([f"{v:.17g}" for v in row])


def transport_step(F: np.ndarray, grid: PhaseGrid, dt: float, limiter: str = "minmod",
                   cfl: float = 0.9) -> np.ndarray:
    """Advance f_t + v1 f_x = 0 by dt on the periodic mesh."""
    if not dt > 0:
        raise CFLError(f"dt must be positive, got {dt}")
    if grid.v_max * dt / grid.dx > cfl * (1.0 + 1e-12):
        raise CFLError(f"dt={dt:g} exceeds the CFL bound {cfl * grid.dx / grid.v_max:g}")
    if limiter not in _kernels.LIMITERS:
        raise ValueError(f"unknown limiter {limiter!r}")
    nx, nv = grid.nx, grid.nv
    src = np.ascontiguousarray(F, dtype=float).reshape(nx, nv, -1)
    out = np.empty_like(src)
    courant = grid.v_nodes * (dt / grid.dx)
    _kernels.transport_sweep(src, out, courant, _kernels.LIMITERS[limiter])
    return out.reshape(grid.shape)


def relaxation_step(F: np.ndarray, grid: PhaseGrid, params: ModelParams | None, dt: float,
                    scheme: str = "exponential") -> np.ndarray:
    """Relax every cell toward its moment-matched ellipsoidal Maxwellian."""
    params = grid.params if params is None else params
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    F = np.ascontiguousarray(F, dtype=float)
    rho, mom, S, E_I = raw_moments(F, grid)
    if not np.all(np.isfinite(rho)) or np.any(rho <= 0):
        raise InvalidFieldError(f"non-positive or non-finite density (min rho = {np.min(rho)!r})")
    state = state_from_moments(rho, mom, S, E_I, params)
    target = MomentTarget(rho, mom, 0.5 * np.trace(S, axis1=-2, axis2=-1) + E_I)
    Mv, MI = maxwellian_factors(state, grid)
    Mv, MI = moment_match_factors(Mv, MI, target, grid)
    kdt = np.atleast_1d(state.A_freq * dt)
    if scheme == "exponential":
        keep = np.exp(-kdt)
        gain = -np.expm1(-kdt)
    elif scheme == "implicit":
        keep = 1.0 / (1.0 + kdt)
        gain = kdt / (1.0 + kdt)
    else:
        raise ValueError(f"unknown relaxation scheme {scheme!r}")
    lead = F.shape[:-4]
    ncell = int(np.prod(lead, dtype=int))
    src = F.reshape(ncell, grid.nv**3, grid.ni)
    out = np.empty_like(src)
    _kernels.relax_update(src, np.ascontiguousarray(Mv.reshape(ncell, -1)),
                          np.ascontiguousarray(MI.reshape(ncell, -1)),
                          keep.reshape(-1), gain.reshape(-1), out)
    return out.reshape(F.shape)


def x_derivative(f: np.ndarray, dx: float, order: int) -> np.ndarray:
    """Periodic second-order central difference along axis 0."""
    if order == 0:
        return f
    if order == 1:
        return (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2.0 * dx)
    if order == 2:
        return (np.roll(f, -1, axis=0) - 2.0 * f + np.roll(f, 1, axis=0)) / dx**2
    raise ValueError(f"derivative order must be 0, 1 or 2, got {order}")


def energy_norm(F: np.ndarray, grid: PhaseGrid, deriv_order: int = 2, m: np.ndarray | None = None) -> float:
    """Sum over k <= deriv_order of ||d_x^k f||^2 with f = (F - m)/sqrt(m)."""
    m = global_maxwellian(grid) if m is None else m
    f = (F - m) / np.sqrt(m)
    w = grid.weights.reshape(-1)
    total = 0.0
    for k in range(deriv_order + 1):
        d = x_derivative(f, grid.dx, k).reshape(grid.nx, -1)
        total += float(np.sum((d * d) @ w)) * grid.dx
    return total


def record(diag: Diagnostics, t: float, F: np.ndarray, grid: PhaseGrid, params: ModelParams,
           deriv_order: int = 2, m: np.ndarray | None = None):
    inv = collision_invariants(F, grid)
    state = compute_moments(F, grid, params)
    diag.append(
        t=t,
        mass=np.sum(inv.mass) * grid.dx,
        mom1=np.sum(inv.momentum[:, 0]) * grid.dx,
        mom2=np.sum(inv.momentum[:, 1]) * grid.dx,
        mom3=np.sum(inv.momentum[:, 2]) * grid.dx,
        energy=np.sum(inv.energy) * grid.dx,
        H=h_functional(F, grid),
        Enorm=energy_norm(F, grid, deriv_order, m),
        minF=np.min(F),
        lamMin=np.min(check_tensor_spd(state)),
    )


def run(F0: np.ndarray, grid: PhaseGrid, params: ModelParams | None, config: SolverConfig,
        callback: Callable[[int, float, np.ndarray], None] | None = None):
    """Integrate to ``config.t_end``; returns (F_final, Diagnostics).

    Diagnostics are recorded at t=0, every ``output_every`` steps and at the
    final time.  ``callback(step, t, F)`` is invoked at the same instants.
    """
    params = grid.params if params is None else params
    if params != grid.params:
        grid = grid.with_params(params)
    F = np.array(F0, dtype=float, copy=True)
    if F.shape != grid.shape:
        raise ValueError(f"F0 has shape {F.shape}, grid expects {grid.shape}")
    if not np.all(np.isfinite(F)) or np.any(F < 0):
        raise ValueError("F0 must be finite and non-negative")

    dt, n_steps = config.time_step(grid)
    m = global_maxwellian(grid)
    diag = Diagnostics()

    def sample(step, t):
        record(diag, t, F, grid, params, config.deriv_order, m)
        if callback is not None:
            callback(step, t, F)

    def transport(h):
        return transport_step(F, grid, h, config.limiter, config.cfl)

    sample(0, 0.0)
    for n in range(1, n_steps + 1):
        try:
            if config.splitting == 2:
                F = transport(0.5 * dt)
                F = relaxation_step(F, grid, params, dt, config.relaxation)
                F = transport(0.5 * dt)
            else:
                F = transport(dt)
                F = relaxation_step(F, grid, params, dt, config.relaxation)
            if not np.all(np.isfinite(F)):
                raise FloatingPointError("non-finite values in F")
            if n % config.output_every == 0 or n == n_steps:
                sample(n, n * dt)
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            raise SolverAbort(f"step {n} (t={n * dt:.6g}) failed: {exc}", diag, n) from exc
    return F, diag
