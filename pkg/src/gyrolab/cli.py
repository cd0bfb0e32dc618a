"""Command line interface: run, sweep, validate-config, selftest.

Exit codes: 0 success, 2 config/validation failure, 3 numerical failure.
"""

import argparse
import json
import sys
import time

import numpy as np

from ._accel import pin_blas_single_thread, set_num_threads
from .harness import ConfigError, ScenarioConfig, default_config, run_scenario, sweep


def _load_config(args) -> ScenarioConfig:
    if args.config is None:
        cfg = ScenarioConfig.from_dict({})
    else:
        cfg = ScenarioConfig.from_file(args.config)
    if args.out is not None:
        cfg.raw["output_dir"] = args.out
    if getattr(args, "b", None):
        cfg.raw["b_list"] = [float(x) for x in args.b]
        cfg.validate_physics()
    return cfg


def _progress(b, idx, total):
    print(f"  [b={b:g}] checkpoint {idx}/{total}", flush=True)


def cmd_validate(args) -> int:
    cfg = _load_config(args)
    print(json.dumps(cfg.raw, indent=1, sort_keys=True))
    print("config OK", file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = cfg.raw["output_dir"]
    for b in cfg.raw["b_list"]:
        print(f"running scenario at b = {b:g}", flush=True)
        rep = run_scenario(cfg, b, out_dir=f"{out}/b{b:g}", progress=_progress)
        print(f"  done in {rep.wallclock:.1f} s; residuals "
              f"{ {k: round(v, 6) for k, v in rep.residuals.items()} }")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    result = sweep(cfg, out_dir=cfg.raw["output_dir"], progress=_progress)
    if result["failures"]:
        print("failed runs:", result["failures"], file=sys.stderr)
    for key, fit in result["fits"].items():
        print(f"{key}: exponent {fit['exponent']:.4f} "
              f"(log-rms residual {fit['residual']:.3g})")
    print(f"sweep wallclock: {result['wallclock_seconds']:.1f} s")
    if result["failures"] and len(result["rows"]) < 3:
        return 3
    return 0


def cmd_selftest(args) -> int:
    """Fast internal sanity checks (algebra + one tiny interacting step)."""
    from .basis import Truncation, kinetic_diagonal, ladder_matrix, make_scaling
    from .grids import BoxSpec
    from .hartree import HartreeEngine, LatticeSpec, dt_cap, initial_state
    from .potentials import GaussianBump, PotentialSpec

    t0 = time.time()
    failures = []

    t = Truncation(4, 10)
    A = ladder_matrix("a", t).A
    Ad = ladder_matrix("a_dag", t).A
    interior = t.interior_mask()
    comm = (A @ Ad - Ad @ A)[np.ix_(interior, interior)]
    if np.abs(comm - np.eye(comm.shape[0])).max() > 1e-13:
        failures.append("ladder commutator")

    s = make_scaling(4.0)
    if not np.allclose(kinetic_diagonal(Truncation(3, 1), make_scaling(1.0)),
                       [1, 1, 3, 3, 5, 5, 7, 7]):
        failures.append("kinetic eigenvalues")

    pot = PotentialSpec(bumps=(GaussianBump(0.3, (0.3, 0.0), 0.6),),
                        w_amplitude=0.25, w_width=0.7)
    trunc = Truncation(8, 24)
    eng = HartreeEngine(trunc, s, pot, BoxSpec(2.6, 256))
    g = initial_state(3, LatticeSpec(), s, trunc)
    e0 = eng.energy(g)
    dt = dt_cap(pot, s)
    for _ in range(10):
        g = eng.step(g, dt)
    if abs(g.trace() - 1.0) > 1e-10:
        failures.append("trace conservation")
    if g.max_occupation() > s.pauli_cap + 1e-10:
        failures.append("Pauli bound")
    if abs(eng.energy(g) - e0) > 1e-6:
        failures.append("energy conservation")

    for name in ("ladder commutator", "kinetic eigenvalues", "trace conservation",
                 "Pauli bound", "energy conservation"):
        status = "FAIL" if name in failures else "ok"
        print(f"selftest {name}: {status}")
    print(f"selftest wallclock: {time.time() - t0:.1f} s")
    return 3 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gyrolab",
        description="2D magnetic Hartree dynamics and its gyrokinetic drift limit")
    parser.add_argument("--threads", type=int, default=None,
                        help="numba thread count")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("run", cmd_run), ("sweep", cmd_sweep),
                     ("validate-config", cmd_validate), ("selftest", cmd_selftest)):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON scenario config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--b", nargs="*", default=None,
                       help="override the field amplitude list")
        p.set_defaults(func=fn)

    args = parser.parse_args(argv)
    pin_blas_single_thread()
    if args.threads is not None:
        set_num_threads(args.threads)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
