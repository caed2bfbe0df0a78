"""Canned experiments behind the command-line front end."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .grid import ModelParams, PhaseGrid, build_grid, global_maxwellian
from .linearized import (
    ProjectionBasis,
    dissipation_checks,
    e_split_closed_form,
    e_split_norm,
    kernel_dimension,
    random_fields,
    verify_suite,
)
from .micro_macro import accumulate_energy, control_ratio
from .solver import Diagnostics, SolverConfig, record, run

CONSERVATION_TOL = 1e-10


def model_params(cfg: RunConfig) -> ModelParams:
    return ModelParams(cfg.nu, cfg.theta, cfg.delta)


def make_grid(cfg: RunConfig, params: ModelParams | None = None) -> PhaseGrid:
    params = model_params(cfg) if params is None else params
    return build_grid(params, nx=cfg.nx, nv=cfg.nv, ni=cfg.ni, v_max=cfg.v_max,
                      length=cfg.length, i_rule=cfg.i_rule)


def solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(t_end=cfg.t_end, cfl=cfg.cfl, steps=cfg.steps or None,
                        output_every=cfg.output_every, splitting=cfg.splitting,
                        limiter=cfg.limiter, relaxation=cfg.relaxation, deriv_order=cfg.deriv_order)


def gaussian_state(grid: PhaseGrid, rho, U, Theta, T_I) -> np.ndarray:
    """rho Lambda / (sqrt(det(2 pi Theta)) T_I^(delta/2)) exp(-(v-U).Theta^-1.(v-U)/2 - y/T_I) on one cell."""
    Theta = np.asarray(Theta, dtype=float)
    d = grid.vel - np.asarray(U, dtype=float)
    quad = np.einsum("...i,ij,...j->...", d, np.linalg.inv(Theta), d)
    norm = rho * grid.lam / (math.sqrt(np.linalg.det(2.0 * math.pi * Theta)) * T_I ** (grid.delta / 2.0))
    return norm * np.exp(-0.5 * quad)[..., None] * np.exp(-grid.y_nodes / T_I)


def admissible(f: np.ndarray, basis: ProjectionBasis) -> np.ndarray:
    """Remove the x-mean of the P_m components.

    This zeroes the total mass, momentum and energy perturbations, and also
    the separately conserved internal-energy mode that theta = 0 keeps.
    """
    mean = np.mean(f, axis=0)
    return f - basis.project("P_m", mean)[None]


def perturbation_field(grid: PhaseGrid, amplitude: float, seed: int, modes) -> np.ndarray:
    """Admissible f with F = m + sqrt(m) f = m (1 + amplitude q), max |q| = 1.

    q is a sum over the wavenumbers in ``modes`` of cos/sin(k 2 pi x / L) times
    seeded Gaussian bumps in (v, y), so F stays positive for amplitude < 1.
    """
    rng = np.random.default_rng(seed)
    v = grid.vel[..., None, :]
    y = grid.y_nodes
    kx = 2.0 * math.pi * grid.x_nodes / grid.length
    q = np.zeros(grid.shape)
    for k in modes:
        for trig in (np.cos, np.sin):
            if k == 0 and trig is np.sin:
                continue
            bump = np.zeros(grid.cell_shape)
            for _ in range(3):
                mu = rng.normal(0.0, 1.0, 3)
                s = rng.uniform(0.7, 1.5)
                eta = rng.uniform(0.0, grid.delta)
                r = rng.uniform(0.5, 1.5) * max(grid.delta, 1.0)
                bump += rng.normal() * np.exp(-np.sum((v - mu) ** 2, axis=-1) / (2 * s * s)
                                              - (y - eta) ** 2 / (2 * r * r))
            q += trig(k * kx)[:, None, None, None, None] * bump
    peak = np.max(np.abs(q))
    if peak > 0:
        q /= peak
    sm = np.sqrt(global_maxwellian(grid))
    f = amplitude * sm * q
    return admissible(f, ProjectionBasis.build(grid))


def initial_condition(cfg: RunConfig, grid: PhaseGrid) -> np.ndarray:
    m = global_maxwellian(grid)
    if cfg.initial == "equilibrium":
        cell = m
    elif cfg.initial == "shifted-maxwellian":
        cell = gaussian_state(grid, 1.0, cfg.u0, np.eye(3), 1.0)
    elif cfg.initial == "anisotropic":
        cell = gaussian_state(grid, 1.0, np.zeros(3), np.diag(cfg.theta0_diag), cfg.t_internal0)
    else:
        f = perturbation_field(grid, cfg.amplitude, cfg.seed, cfg.modes)
        F = m + np.sqrt(m) * f
        if np.any(F < 0):
            raise ValueError(f"amplitude {cfg.amplitude} makes F negative")
        return F
    return np.broadcast_to(cell, grid.shape).copy()


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


@dataclass
class SimulationResult:
    F: np.ndarray
    diagnostics: object
    drift: np.ndarray
    failures: list


def simulate(cfg: RunConfig, out_dir=None) -> SimulationResult:
    """Run the solver and check conservation and positivity afterwards."""
    params = model_params(cfg)
    grid = make_grid(cfg, params)
    F0 = initial_condition(cfg, grid)
    F, diag = run(F0, grid, params, solver_config(cfg))
    drift = diag.conservation_drift()
    failures = []
    names = ("mass", "mom1", "mom2", "mom3", "energy")
    for name, d in zip(names, drift):
        if not d <= CONSERVATION_TOL:
            failures.append({"check": f"conservation_{name}", "worst_margin": -float(d),
                             "tolerance": CONSERVATION_TOL, "pass": False})
    if min(diag.minF) < 0:
        failures.append({"check": "positivity", "worst_margin": float(min(diag.minF)),
                         "tolerance": 0.0, "pass": False})
    if out_dir is not None:
        diag.write_csv(Path(out_dir) / "diagnostics.csv")
    return SimulationResult(F, diag, drift, failures)


def verify_linear(cfg: RunConfig, out_dir=None) -> list[dict]:
    params = model_params(cfg)
    grid = make_grid(cfg, params)
    checks = verify_suite(grid, params, samples=cfg.samples, seed=cfg.seed, n_smooth=cfg.smooth_samples)
    report = [c.to_dict() for c in checks]
    if out_dir is not None:
        write_json(Path(out_dir) / "verify_linear.json", report)
    return report


SWEEP_HEADER = ("theta", "kernel_dim", "L_e_split", "L_e_split_closed_form", "worst_coercivity_margin")


def dichotomy_sweep(cfg: RunConfig, out_dir=None) -> list[tuple]:
    """One row per theta: kernel dimension, ||L e_split|| and worst coercivity margin."""
    grid = make_grid(cfg)
    basis = ProjectionBasis.build(grid)
    fields = random_fields(grid, cfg.samples, cfg.seed)
    plist = [ModelParams(cfg.nu, th, cfg.delta) for th in cfg.thetas]
    checks = dissipation_checks(basis, plist, fields)
    rows = []
    for p in plist:
        rows.append((p.theta, kernel_dimension(basis, p), e_split_norm(basis, p),
                     e_split_closed_form(p), checks[p][2].worst_margin))
    if out_dir is not None:
        with open(Path(out_dir) / "dichotomy.csv", "w") as fh:
            fh.write(",".join(SWEEP_HEADER) + "\n")
            for r in rows:
                fh.write(",".join(str(v) if isinstance(v, int) else f"{v:.17g}" for v in r) + "\n")
    return rows


@dataclass
class DecayFit:
    rate: float | None
    r_squared: float | None
    window: tuple
    flagged: bool
    message: str

    @property
    def passed(self) -> bool:
        return self.rate is not None and self.rate > 0 and self.r_squared >= 0.98


def fit_decay(t, S, skip_fraction: float = 0.1, floor: float | None = None) -> DecayFit:
    """Least-squares fit log S = log C - rate t after the first ``skip_fraction`` of the run.

    Samples at or below ``floor`` (default 1e-14 S(0), at least 1e-300) end the
    fitted window early; the fit is then flagged.
    """
    t, S = np.asarray(t, dtype=float), np.asarray(S, dtype=float)
    if S[0] == 0:
        return DecayFit(None, None, (0.0, 0.0), False, "already at equilibrium")
    floor = max(1e-14 * S[0], 1e-300) if floor is None else floor
    start = t[0] + skip_fraction * (t[-1] - t[0])
    below = np.flatnonzero(S <= floor)
    stop = len(S) if below.size == 0 else below[0]
    flagged = stop < len(S)
    sel = np.arange(len(S))
    sel = sel[(t >= start) & (sel < stop)]
    if flagged and sel.size < 3:
        sel = np.arange(stop)
    if sel.size < 3:
        return DecayFit(None, None, (float(t[0]), float(t[-1])), True, "too few resolved samples")
    slope, icpt = np.polyfit(t[sel], np.log(S[sel]), 1)
    resid = np.log(S[sel]) - (slope * t[sel] + icpt)
    ss_tot = np.sum((np.log(S[sel]) - np.mean(np.log(S[sel]))) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 0.0
    msg = "norm reached the numerical floor; fit over the resolved prefix" if flagged else "ok"
    return DecayFit(float(-slope), float(r2), (float(t[sel[0]]), float(t[sel[-1]])), flagged, msg)


def decay(cfg: RunConfig, out_dir=None):
    """Near-equilibrium run with the energy norm, E(t) and R(t) recorded; returns (fit, diagnostics, extra)."""
    params = model_params(cfg)
    grid = make_grid(cfg, params)
    basis = ProjectionBasis.build(grid)
    F0 = initial_condition(replace(cfg, initial="perturbation"), grid)
    ratios = []

    def on_sample(step, t, F):
        ratios.append(control_ratio([basis.to_perturbation(F)], params, basis, cfg.deriv_order)[0])

    if cfg.amplitude == 0:
        diag = Diagnostics()
        record(diag, 0.0, F0, grid, params, cfg.deriv_order)
        on_sample(0, 0.0, F0)
    else:
        F, diag = run(F0, grid, params, solver_config(cfg), callback=on_sample)
    t, S = diag.column("t"), diag.column("Enorm")
    fit = fit_decay(t, S, cfg.fit_skip_fraction)
    extra = {"E": accumulate_energy(S, t), "R": np.array(ratios)}
    if out_dir is not None:
        diag.write_csv(Path(out_dir) / "decay.csv", extra)
        write_json(Path(out_dir) / "decay_fit.json", {
            "rate": fit.rate, "r_squared": fit.r_squared, "window": list(fit.window),
            "flagged": fit.flagged, "message": fit.message,
            "pass": fit.passed or fit.message == "already at equilibrium"})
    return fit, diag, extra
