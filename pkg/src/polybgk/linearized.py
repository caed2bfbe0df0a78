"""Linearized relaxation operator around the global Maxwellian and its checks.

Perturbations are f = (F - m)/sqrt(m) sampled on one spatial cell (or with
extra leading axes).  The four projections are built from discretely
orthonormalized basis tables and L is assembled from those same projections,
so the projection algebra and the dissipation identity hold to round-off;
quadrature error only enters through how well the discrete modes match the
continuum ones.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .grid import ModelParams, PhaseGrid, global_maxwellian, inner_product
from .maxwellian import ellipsoidal_maxwellian
from .moments import compute_moments

PROJECTIONS = ("P_p", "P_m", "P_1", "P_2")
RANK_TOL = 1e-10
DEFAULT_EPS = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
RESIDUAL_FLOOR = 1e-12


def _orthonormalize(raw: np.ndarray, weights: np.ndarray, rank_tol: float = 1e-10) -> np.ndarray:
    """Symmetric (Loewdin) orthonormalization of the rows of ``raw``.

    Directions whose Gram eigenvalue falls below ``rank_tol`` times the largest
    are dropped, so a dependent family returns fewer rows than it was given.
    """
    k = len(raw)
    flat = raw.reshape(k, -1)
    G = (flat * weights.reshape(-1)) @ flat.T
    G = 0.5 * (G + G.T)
    lam, V = np.linalg.eigh(G)
    keep = lam > rank_tol * lam[-1]
    if np.all(keep):
        C = V @ np.diag(lam**-0.5) @ V.T
    else:
        C = np.diag(lam[keep] ** -0.5) @ V[:, keep].T
    return (C @ flat).reshape((len(C),) + raw.shape[1:])


@dataclass(frozen=True, eq=False)
class ProjectionBasis:
    grid: PhaseGrid
    m: np.ndarray
    sqrt_m: np.ndarray
    raw: dict
    sets: dict

    @classmethod
    def build(cls, grid: PhaseGrid) -> "ProjectionBasis":
        m = global_maxwellian(grid)
        sm = np.sqrt(m)
        delta = grid.delta
        v = grid.vel[..., None, :]
        y = grid.y_nodes
        v2 = np.sum(v * v, axis=-1)
        one = np.ones(grid.cell_shape)
        vi = [v[..., i] * one for i in range(3)]
        e_c = ((v2 - 3.0) + (2.0 * y - delta)) / math.sqrt(2.0 * (3.0 + delta)) * one
        e_tr = (v2 - 3.0) / math.sqrt(6.0) * one
        e_int = (2.0 * y - delta) / math.sqrt(2.0 * delta) * one
        raw = {
            "P_p": np.stack([one] + vi + [e_c]) * sm,
            "P_m": np.stack([one] + vi + [e_tr, e_int]) * sm,
            "P_1": np.stack([(3.0 * vi[i] ** 2 - v2 * one) / (3.0 * math.sqrt(2.0)) for i in range(3)]) * sm,
            "P_2": np.stack([vi[0] * vi[1], vi[1] * vi[2], vi[0] * vi[2]]) * sm,
        }
        sets = {name: _orthonormalize(b, grid.weights) for name, b in raw.items()}
        for arr in (m, sm, *raw.values(), *sets.values()):
            arr.setflags(write=False)
        return cls(grid, m, sm, raw, sets)

    # modes used by the kernel analysis: span{1, v_i, v_i v_j (i <= j), I^(2/delta)} sqrt(m)
    def eleven_modes(self) -> np.ndarray:
        v = self.grid.vel[..., None, :]
        one = np.ones(self.grid.cell_shape)
        cols = [one] + [v[..., i] * one for i in range(3)]
        cols += [v[..., i] * v[..., j] * one for i in range(3) for j in range(i, 3)]
        cols.append(self.grid.y_nodes * one)
        return _orthonormalize(np.stack(cols) * self.sqrt_m, self.grid.weights)

    def e_split(self) -> np.ndarray:
        """Translational energy mode (|v|^2 - 3)/sqrt(6) sqrt(m)."""
        v2 = np.sum(self.grid.vel**2, axis=-1)[..., None]
        return (v2 - 3.0) / math.sqrt(6.0) * self.sqrt_m

    def coefficients(self, which: str, f: np.ndarray) -> np.ndarray:
        """Inner products <f, b_k> over the orthonormal set; shape lead + (k,)."""
        B = self.sets[which]
        f = np.asarray(f, dtype=float)
        lead = f.shape[: f.ndim - 4]
        WB = (B * self.grid.weights).reshape(len(B), -1)
        return f.reshape(lead + (-1,)) @ WB.T

    def project(self, which: str, f: np.ndarray) -> np.ndarray:
        if which not in self.sets:
            raise KeyError(f"unknown projection {which!r}; expected one of {PROJECTIONS}")
        B = self.sets[which]
        c = self.coefficients(which, f)
        return (c @ B.reshape(len(B), -1)).reshape(np.shape(f))

    def decompose(self, f: np.ndarray) -> dict:
        """All four projections of ``f``, for reuse across parameter sets."""
        return {k: self.project(k, f) for k in PROJECTIONS}

    def P_nu_theta(self, params: ModelParams, f: np.ndarray, proj: dict | None = None) -> np.ndarray:
        th, nu = params.theta, params.nu
        P = self.decompose(f) if proj is None else proj
        return th * P["P_p"] + (1.0 - th) * (P["P_m"] + nu * (P["P_1"] + P["P_2"]))

    def apply_L(self, params: ModelParams, f: np.ndarray, proj: dict | None = None) -> np.ndarray:
        return (self.P_nu_theta(params, f, proj) - f) / params.freq_denominator

    def to_perturbation(self, F: np.ndarray) -> np.ndarray:
        return (F - self.m) / self.sqrt_m

    def from_perturbation(self, f: np.ndarray) -> np.ndarray:
        return self.m + self.sqrt_m * f

    def inner(self, a, b):
        return inner_product(a, b, self.grid)

    def sq(self, a):
        return inner_product(a, a, self.grid)


def dissipation_terms(basis: ProjectionBasis, params: ModelParams, f: np.ndarray, proj: dict | None = None):
    """(lhs, A, B) with lhs = -(1 - nu + theta nu) <L f, f>."""
    P = basis.decompose(f) if proj is None else proj
    lhs = -params.freq_denominator * basis.inner(basis.apply_L(params, f, P), f)
    A = basis.sq(f - P["P_p"])
    B = basis.sq(f - P["P_m"]) - params.nu * basis.sq(P["P_1"] + P["P_2"])
    return lhs, A, B


def coercivity_margin(basis: ProjectionBasis, params: ModelParams, f: np.ndarray, proj: dict | None = None):
    """lhs - theta ||(I-P_p)f||^2 for theta > 0, lhs - (1-|nu|) ||(I-P_m)f||^2 for theta = 0."""
    P = basis.decompose(f) if proj is None else proj
    lhs, A, _ = dissipation_terms(basis, params, f, P)
    if params.theta > 0:
        return lhs - params.theta * A
    return lhs - (1.0 - abs(params.nu)) * basis.sq(f - P["P_m"])


def L_matrix(basis: ProjectionBasis, params: ModelParams) -> np.ndarray:
    """Matrix of L in the orthonormalized eleven-mode basis."""
    Q = basis.eleven_modes()
    LQ = basis.apply_L(params, Q)
    return (Q * basis.grid.weights).reshape(len(Q), -1) @ LQ.reshape(len(Q), -1).T


def kernel_dimension(basis: ProjectionBasis, params: ModelParams, tol: float = RANK_TOL) -> int:
    s = np.linalg.svd(L_matrix(basis, params), compute_uv=False)
    return int(np.sum(s < tol))


def e_split_norm(basis: ProjectionBasis, params: ModelParams) -> float:
    return float(np.sqrt(basis.sq(basis.apply_L(params, basis.e_split()))))


def e_split_closed_form(params: ModelParams) -> float:
    d = params.delta
    return params.theta / params.freq_denominator * math.sqrt(d / (3.0 + d))


def random_fields(grid: PhaseGrid, n: int, seed: int = 0, bumps: int = 4, lead: tuple = ()) -> np.ndarray:
    """Seeded smooth fields: Gaussian bumps in (v, y) plus random low-order moments.

    Returns shape ``(n,) + lead + grid.cell_shape``, each field of unit norm.
    """
    rng = np.random.default_rng(seed)
    v = grid.vel[..., None, :]
    y = grid.y_nodes
    sm = np.sqrt(global_maxwellian(grid))
    out = np.empty((n,) + tuple(lead) + grid.cell_shape)
    for k in range(n):
        for idx in np.ndindex(*lead):
            f = np.zeros(grid.cell_shape)
            for _ in range(bumps):
                mu = rng.normal(0.0, 1.2, 3)
                s = rng.uniform(0.6, 1.8)
                eta = rng.uniform(0.0, 2.0 * grid.delta)
                r = rng.uniform(0.5, 2.0 * grid.delta)
                amp = rng.normal()
                f += amp * np.exp(-np.sum((v - mu) ** 2, axis=-1) / (2 * s * s) - (y - eta) ** 2 / (2 * r * r))
            c = rng.normal(size=11)
            poly = (c[0] + v[..., 0] * c[1] + v[..., 1] * c[2] + v[..., 2] * c[3]
                    + c[4] * v[..., 0] ** 2 + c[5] * v[..., 1] ** 2 + c[6] * v[..., 2] ** 2
                    + c[7] * v[..., 0] * v[..., 1] + c[8] * v[..., 1] * v[..., 2] + c[9] * v[..., 0] * v[..., 2]
                    + c[10] * (y - grid.delta / 2))
            f += 0.3 * poly * sm
            out[(k,) + idx] = f
        nrm = np.sqrt(np.sum(inner_product(out[k], out[k], grid)))
        out[k] /= nrm
    return out


def linearization_residuals(basis: ProjectionBasis, params: ModelParams, f: np.ndarray,
                            eps_list=DEFAULT_EPS):
    """Residuals r(eps) of the Maxwellian and s(eps) of the collision frequency.

    r(eps) = ||(M(m + eps sqrt(m) f) - m)/sqrt(m) - eps P f|| and
    s(eps) = |rho T_delta(F_eps) - rho T_delta(m) - eps sum a_i <f, e_i>|, the
    baseline being the discrete value at m (one up to quadrature error).
    """
    grid = basis.grid.with_params(params)
    m, sm = basis.m, basis.sqrt_m
    Pf = basis.P_nu_theta(params, f)
    e = moment_weights(basis, params)
    a = np.zeros(11)
    a[4:7] = 1.0 / (3.0 + params.delta)
    a[10] = params.delta / (3.0 + params.delta)
    lin = float(np.dot(a, [basis.inner(f, ei) for ei in e]))
    s0 = compute_moments(m, grid, params)
    base = float(s0.rho * s0.T_delta)
    r, s = [], []
    for eps in eps_list:
        F = m + eps * sm * f
        st = compute_moments(F, grid, params)
        M = ellipsoidal_maxwellian(st, grid)
        r.append(float(np.sqrt(basis.sq((M - m) / sm - eps * Pf))))
        s.append(abs(float(st.rho * st.T_delta) - base - eps * lin))
    return np.array(r), np.array(s)


def moment_weights(basis: ProjectionBasis, params: ModelParams) -> list[np.ndarray]:
    """The eleven moment weights e_1..e_11 of the first-order expansion."""
    th, nu, d = params.theta, params.nu, params.delta
    v = basis.grid.vel[..., None, :]
    y = basis.grid.y_nodes
    sm = basis.sqrt_m
    v2 = np.sum(v * v, axis=-1)
    mix = th * (v2 / (3.0 + d) + 2.0 * y / (3.0 + d))
    e = [sm] + [v[..., i] * sm for i in range(3)]
    e += [(mix + (1.0 - th) * ((1.0 - nu) / 3.0 * v2 + nu * v[..., i] ** 2)) * sm for i in range(3)]
    off = nu * (1.0 - th)
    e += [off * v[..., 0] * v[..., 1] * sm, off * v[..., 1] * v[..., 2] * sm, off * v[..., 2] * v[..., 0] * sm]
    e.append((mix + (1.0 - th) * (2.0 / d) * y) * sm)
    return e


def fit_slope(eps, res, floor: float = RESIDUAL_FLOOR):
    """Least-squares slope of log(res) against log(eps); points below ``floor`` are excluded.

    Returns (slope, n_used); slope is nan when fewer than two points remain.
    """
    eps, res = np.asarray(eps, dtype=float), np.asarray(res, dtype=float)
    ok = res > floor
    if np.sum(ok) < 2:
        return math.nan, int(np.sum(ok))
    slope = np.polyfit(np.log(eps[ok]), np.log(res[ok]), 1)[0]
    return float(slope), int(np.sum(ok))


@dataclass
class CheckResult:
    """One verification check; it passes when ``worst_margin >= -tolerance``."""

    check: str
    samples: int
    worst_margin: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        if not math.isfinite(d["worst_margin"]):
            d["worst_margin"] = None
        return d


def _result(name, samples, margin, tol) -> CheckResult:
    margin = float(margin)
    return CheckResult(name, int(samples), margin, float(tol), bool(math.isfinite(margin) and margin >= -tol))


def _chunks(fields: np.ndarray, size: int = 16):
    for i in range(0, len(fields), size):
        yield fields[i:i + size]


def check_projection_algebra(basis: ProjectionBasis, fields: np.ndarray, tol: float = 1e-12) -> CheckResult:
    """Idempotence and mutual orthogonality, each violation relative to ||f||."""
    worst = 0.0
    for f in _chunks(fields):
        nf = np.sqrt(basis.sq(f))
        P = {k: basis.project(k, f) for k in PROJECTIONS}
        viol = [basis.project(k, P[k]) - P[k] for k in PROJECTIONS]
        viol += [basis.project(a, P[b]) for a, b in (("P_m", "P_1"), ("P_1", "P_m"), ("P_m", "P_2"),
                                                       ("P_2", "P_m"), ("P_1", "P_2"), ("P_2", "P_1"))]
        for d in viol:
            worst = max(worst, float(np.max(np.sqrt(basis.sq(d)) / nf)))
    return _result("projection_algebra", len(fields), -worst, tol)


def check_self_adjoint(basis: ProjectionBasis, params: ModelParams, fields: np.ndarray,
                       tol: float = 1e-12) -> CheckResult:
    """|<Pf, g> - <f, Pg>| for each projection and for L, on consecutive field pairs."""
    worst = 0.0
    ops = [lambda h, k=k: basis.project(k, h) for k in PROJECTIONS]
    ops.append(lambda h: basis.apply_L(params, h))
    n = len(fields) // 2
    for f, g in zip(_chunks(fields[:2 * n:2]), _chunks(fields[1:2 * n:2])):
        scale = np.sqrt(basis.sq(f) * basis.sq(g))
        for op in ops:
            gap = np.abs(basis.inner(op(f), g) - basis.inner(f, op(g))) / scale
            worst = max(worst, float(np.max(gap)))
    return _result("self_adjoint", n, -worst, tol)


def dissipation_checks(basis: ProjectionBasis, params_list, fields: np.ndarray,
                       tol: float = 1e-10) -> dict:
    """Dissipation identity, B >= 0 and coercivity for several parameter sets.

    Projections of each chunk are computed once and shared by all parameter
    sets.  Returns ``{params: [identity, B_nonnegative, coercivity]}``.
    """
    worst = {p: [0.0, math.inf, math.inf] for p in params_list}
    for f in _chunks(fields):
        P = basis.decompose(f)
        nf2 = basis.sq(f)
        for p in params_list:
            lhs, A, B = dissipation_terms(basis, p, f, P)
            rhs = p.theta * A + (1.0 - p.theta) * B
            coer = lhs - p.theta * A if p.theta > 0 else lhs - (1.0 - abs(p.nu)) * basis.sq(f - P["P_m"])
            w = worst[p]
            w[0] = max(w[0], float(np.max(np.abs(lhs - rhs) / nf2)))
            w[1] = min(w[1], float(np.min(B / nf2)))
            w[2] = min(w[2], float(np.min(coer / nf2)))
    n = len(fields)
    return {p: [_result("dissipation_identity", n, -w[0], tol), _result("B_nonnegative", n, w[1], tol),
                _result("coercivity", n, w[2], tol)] for p, w in worst.items()}


def check_kernel(basis, params) -> CheckResult:
    expected = 5 if params.theta > 0 else 6
    dim = kernel_dimension(basis, params)
    return _result("kernel_dimension", 1, -abs(dim - expected), 0.0)


def check_kernel_annihilation(basis, params, tol: float = 1e-12) -> CheckResult:
    """||L k|| for the kernel elements listed by the dichotomy."""
    ker = list(basis.sets["P_p"]) if params.theta > 0 else list(basis.sets["P_m"])
    worst = max(math.sqrt(basis.sq(basis.apply_L(params, k))) for k in ker)
    return _result("kernel_annihilation", len(ker), -worst, tol)


def check_e_split(basis, params, tol: float = 1e-8) -> CheckResult:
    err = abs(e_split_norm(basis, params) - e_split_closed_form(params))
    return _result("e_split_norm", 1, -err, tol)


def check_linearization(basis, params, fields, eps_list=DEFAULT_EPS, lo: float = 1.9, hi: float = 2.1):
    """Slope checks for r(eps) and s(eps); margin is the distance inside [lo, hi]."""
    worst_r = worst_s = math.inf
    for f in fields:
        r, s = linearization_residuals(basis, params, f, eps_list)
        for res, which in ((r, "r"), (s, "s")):
            slope, _ = fit_slope(eps_list, res)
            margin = min(slope - lo, hi - slope) if math.isfinite(slope) else -math.inf
            if which == "r":
                worst_r = min(worst_r, margin)
            else:
                worst_s = min(worst_s, margin)
    return [_result("linearization_order_r", len(fields), worst_r, 0.0),
            _result("linearization_order_s", len(fields), worst_s, 0.0)]


def verify_suite(grid: PhaseGrid, params: ModelParams, samples: int = 200, seed: int = 0,
                 n_smooth: int = 5, basis: ProjectionBasis | None = None) -> list[CheckResult]:
    """Run every linear check for one parameter set."""
    basis = ProjectionBasis.build(grid) if basis is None else basis
    fields = random_fields(grid, samples, seed)
    smooth = random_fields(grid, n_smooth, seed + 1)
    checks = [
        check_projection_algebra(basis, fields),
        check_self_adjoint(basis, params, fields),
        *dissipation_checks(basis, [params], fields)[params],
        check_kernel(basis, params),
        check_kernel_annihilation(basis, params),
        check_e_split(basis, params),
    ]
    checks += check_linearization(basis, params, smooth)
    return checks
