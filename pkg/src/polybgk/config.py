"""Run configuration: a flat TOML file of typed keys validated at load time."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

INITIAL_KINDS = ("equilibrium", "shifted-maxwellian", "anisotropic", "perturbation")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    # model
    nu: float = 0.5
    theta: float = 0.5
    delta: float = 2.0
    # grid
    nx: int = 32
    nv: int = 24
    ni: int = 32
    v_max: float = 8.0
    length: float = 2.0 * math.pi
    i_rule: str = "laguerre"
    # solver
    cfl: float = 0.9
    t_end: float = 1.0
    steps: int = 0
    output_every: int = 1
    splitting: int = 2
    limiter: str = "minmod"
    relaxation: str = "exponential"
    deriv_order: int = 2
    # initial condition
    initial: str = "equilibrium"
    u0: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    theta0_diag: list = field(default_factory=lambda: [1.5, 0.75, 0.75])
    t_internal0: float = 1.0
    amplitude: float = 1e-3
    modes: list = field(default_factory=lambda: [1])
    seed: int = 0
    # verification
    samples: int = 200
    smooth_samples: int = 5
    thetas: list = field(default_factory=lambda: [0.0, 1e-3, 1e-2, 0.1, 1.0])
    fit_skip_fraction: float = 0.1

    def validate(self) -> "RunConfig":
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(f"{key}: {msg}", key)

        need(-0.5 < self.nu < 1.0, "nu", "must lie in (-1/2, 1)")
        need(0.0 <= self.theta <= 1.0, "theta", "must lie in [0, 1]")
        need(self.delta > 0, "delta", "must be positive")
        for key in ("nx", "nv", "ni"):
            need(getattr(self, key) >= 4, key, "must be >= 4")
        need(0.5 * self.v_max**2 >= 27.6, "v_max", "must satisfy v_max^2/2 >= 27.6")
        need(self.length > 0, "length", "must be positive")
        need(self.i_rule in ("laguerre", "jacobi"), "i_rule", "must be 'laguerre' or 'jacobi'")
        need(0.0 < self.cfl <= 0.9, "cfl", "must lie in (0, 0.9]")
        need(self.t_end > 0, "t_end", "must be positive")
        need(self.steps >= 0, "steps", "must be >= 0 (0 means CFL-limited)")
        need(self.output_every >= 1, "output_every", "must be >= 1")
        need(self.splitting in (1, 2), "splitting", "must be 1 or 2")
        need(self.limiter in ("none", "minmod", "vanleer"), "limiter", "must be none, minmod or vanleer")
        need(self.relaxation in ("exponential", "implicit"), "relaxation", "must be exponential or implicit")
        need(self.deriv_order in (0, 1, 2), "deriv_order", "must be 0, 1 or 2")
        need(self.initial in INITIAL_KINDS, "initial", f"must be one of {', '.join(INITIAL_KINDS)}")
        need(len(self.u0) == 3, "u0", "must have three components")
        need(len(self.theta0_diag) == 3 and min(self.theta0_diag) > 0, "theta0_diag",
             "must be three positive numbers")
        need(self.t_internal0 > 0, "t_internal0", "must be positive")
        need(self.amplitude >= 0, "amplitude", "must be non-negative")
        need(len(self.modes) > 0 and all(k >= 0 for k in self.modes), "modes",
             "must be a non-empty list of non-negative integers")
        need(self.seed >= 0, "seed", "must be non-negative")
        need(self.samples >= 2, "samples", "must be >= 2")
        need(self.smooth_samples >= 1, "smooth_samples", "must be >= 1")
        need(len(self.thetas) > 0 and all(0.0 <= t <= 1.0 for t in self.thetas), "thetas",
             "must be a non-empty list within [0, 1]")
        need(0.0 <= self.fit_skip_fraction < 1.0, "fit_skip_fraction", "must lie in [0, 1)")
        return self


def _coerce(key: str, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        elem = type(default[0]) if default else float
        ok = isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and (elem is float or isinstance(v, int))
            for v in value)
        value = [elem(v) for v in value] if ok else value
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{key}: expected {type(default).__name__}, got {value!r}", key)
    return value


def from_dict(data: dict, base: RunConfig | None = None) -> RunConfig:
    base = RunConfig() if base is None else base
    known = {f.name for f in fields(RunConfig)}
    updates = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{key}: unknown key", key)
        if isinstance(value, dict):
            raise ConfigError(f"{key}: tables are not allowed; the format is flat key = value", key)
        updates[key] = _coerce(key, value, getattr(base, key))
    return replace(base, **updates).validate()


def _key_on_line(path, lineno) -> str | None:
    if not lineno:
        return None
    with open(path, encoding="utf-8", errors="replace") as fh:
        lines = fh.read().splitlines()
    if lineno > len(lines) or "=" not in lines[lineno - 1]:
        return None
    return lines[lineno - 1].split("=", 1)[0].strip() or None


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        key = _key_on_line(path, getattr(exc, "lineno", None))
        where = f"key {key!r}: " if key else ""
        raise ConfigError(f"{path}: {where}{exc}", key) from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return from_dict(data)
