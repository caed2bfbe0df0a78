"""Command-line front end: ``polybgk {simulate,verify-linear,dichotomy-sweep,decay}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, load_config

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat TOML run configuration")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, help="worker threads for the compiled kernels")
    p = argparse.ArgumentParser(prog="polybgk", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "run the solver and write diagnostics.csv"),
                        ("verify-linear", "run the linear-theory check suite, write verify_linear.json"),
                        ("dichotomy-sweep", "kernel dimension and e_split norm against theta"),
                        ("decay", "near-equilibrium decay run with exponential fit")):
        sub.add_parser(name, parents=[common], help=help_)
    return p


def _fail(out: Path, command: str, error: str, details=None, code: int = EXIT_FAIL) -> int:
    record = {"command": command, "error": error, "exit_code": code}
    if details is not None:
        record["failures"] = details
    print(f"polybgk {command}: {error}", file=sys.stderr)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "failure.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    except OSError:
        pass
    return code


def _set_threads(n: int | None):
    if n is None:
        return
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    cmd = args.command
    try:
        cfg = load_config(args.config) if args.config else RunConfig().validate()
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed: must be non-negative", "seed")
            cfg = replace(cfg, seed=args.seed)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads: must be >= 1", "threads")
    except ConfigError as exc:
        return _fail(args.out, cmd, str(exc), code=EXIT_CONFIG)
    _set_threads(args.threads)
    args.out.mkdir(parents=True, exist_ok=True)

    from . import experiments
    from .solver import SolverAbort

    try:
        if cmd == "simulate":
            res = experiments.simulate(cfg, args.out)
            print(f"steps written: {len(res.diagnostics)} rows; max drift {max(res.drift):.3e}")
            if res.failures:
                return _fail(args.out, cmd, "invariant breach", res.failures)
        elif cmd == "verify-linear":
            report = experiments.verify_linear(cfg, args.out)
            for r in report:
                print(f"{'PASS' if r['pass'] else 'FAIL'}  {r['check']:<24} margin={r['worst_margin']}")
            bad = [r for r in report if not r["pass"]]
            if bad:
                return _fail(args.out, cmd, f"{len(bad)} check(s) failed", bad)
        elif cmd == "dichotomy-sweep":
            rows = experiments.dichotomy_sweep(cfg, args.out)
            for r in rows:
                print(f"theta={r[0]:<8g} kernel_dim={r[1]}  |L e_split|={r[2]:.12g}  margin={r[4]:.3e}")
            bad = [{"check": "coercivity", "theta": r[0], "worst_margin": r[4], "tolerance": 1e-10, "pass": False}
                   for r in rows if r[4] < -1e-10]
            if bad:
                return _fail(args.out, cmd, "coercivity bound violated", bad)
        else:
            fit, _, _ = experiments.decay(cfg, args.out)
            if fit.message == "already at equilibrium":
                print("already at equilibrium")
            else:
                print(f"rate={fit.rate:.6g} R2={fit.r_squared:.6f} window={fit.window} {fit.message}")
                if not fit.passed:
                    return _fail(args.out, cmd, "decay fit failed",
                                 [{"check": "decay", "rate": fit.rate, "r_squared": fit.r_squared, "pass": False}])
    except SolverAbort as exc:
        exc.diagnostics.write_csv(args.out / "aborted_diagnostics.csv")
        return _fail(args.out, cmd, str(exc))
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        return _fail(args.out, cmd, f"{type(exc).__name__}: {exc}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
