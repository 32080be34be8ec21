"""Command-line entry point: ``tnpde {solve,sweep,renormalize,calibrate,oracle}``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .bench import BenchmarkConfig, parse_qubits, run_benchmark, run_renormalized, run_single
from .calibration import calibrate_step
from .mps import Truncation
from .oracle import benchmark_potential, dense_problem, generate_fixtures
from .solvers import METHODS

SWEEP_DEFAULT = "1e-6,1e-8,1e-10,1e-12,machine"


def _trunc(text: str, max_bond: int | None) -> Truncation:
    if text == "machine":
        return Truncation.machine(max_bond)
    return Truncation(float(text), max_bond)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or key=value file with BenchmarkConfig fields; flags override it")
    p.add_argument("--problem", choices=("ho1d", "squeezed2d"))
    p.add_argument("--qubits", type=parse_qubits, help="per dimension: 8, 4-6 or 4,6")
    p.add_argument("--L", type=float, help="box length (default 10)")
    p.add_argument("--solver", choices=METHODS)
    p.add_argument("--nv", type=int, help="Krylov basis size for arnoldi")
    p.add_argument("--delta-beta", type=float)
    p.add_argument("--tol", type=float, help="energy-change stopping tolerance")
    p.add_argument("--target", type=float, help="stop once epsilon drops below this")
    p.add_argument("--trunc-tol", help="truncation tolerance or 'machine'")
    p.add_argument("--max-bond", type=int)
    p.add_argument("--steps", type=int, help="maximum outer steps")
    p.add_argument("--warm-start", action="store_true", default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory for CSV files and the JSON manifest")


def build_config(args: argparse.Namespace) -> BenchmarkConfig:
    base = BenchmarkConfig.load(args.config).to_dict() if args.config else BenchmarkConfig().to_dict()
    solver = base["solver"]
    for flag, key in (("problem", "problem"), ("L", "L"), ("seed", "seed"), ("out", "output"), ("target", "target_epsilon")):
        v = getattr(args, flag, None)
        if v is not None:
            base[key] = v
    if args.problem is not None and args.problem != BenchmarkConfig().problem and not args.config:
        base["params"] = {}
    if args.qubits is not None:
        base["qubits"] = list(args.qubits) if isinstance(args.qubits, tuple) else args.qubits
    if args.warm_start is not None:
        base["warm_start"] = args.warm_start
    for flag, key in (("solver", "method"), ("nv", "n_v"), ("delta_beta", "delta_beta"), ("tol", "energy_tolerance"), ("steps", "max_steps")):
        v = getattr(args, flag, None)
        if v is not None:
            solver[key] = v
    tr = solver["trunc"]
    if args.trunc_tol is not None or args.max_bond is not None:
        t = _trunc(args.trunc_tol or ("machine" if tr["mode"] == "machine_exact" else repr(tr["tolerance"])), args.max_bond or tr["max_bond"])
        solver["trunc"] = {"tolerance": t.tolerance, "max_bond": t.max_bond, "mode": t.mode}
    return BenchmarkConfig.from_dict(base)


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, default=lambda o: o.item() if hasattr(o, "item") else str(o))
    sys.stdout.write("\n")


def _summary(r) -> dict:
    f = r.final if r.records else None
    return {
        "qubits": r.qubits,
        "steps": r.steps,
        "energy": f.energy if f else None,
        r.epsilon_column: f.epsilon if f else None,
        "rescaled_cost": f.ledger.rescaled_cost if f else None,
        "max_bond": f.max_bond if f else None,
        "params": f.mps_parameter_count if f else None,
        "reason": r.report.reason if r.report else r.failed,
    }


def cmd_solve(args) -> int:
    cfg = build_config(args)
    _emit([_summary(r) for r in run_benchmark(cfg)])
    return 0


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    rows = []
    for label in args.trunc_tols.split(","):
        t = _trunc(label.strip(), args.max_bond)
        sub = BenchmarkConfig.from_dict({**cfg.to_dict(), "output": None})
        sub.solver = sub.solver.replace(trunc=t)
        if cfg.output:
            sub.output = str(Path(cfg.output) / f"trunc_{t.label()}")
        for r in run_benchmark(sub):
            rows.append({"trunc": t.label(), **_summary(r)})
    _emit(rows)
    return 0


def cmd_renormalize(args) -> int:
    cfg = build_config(args)
    if len(cfg.qubit_list) < 2:
        print("renormalize needs a qubit range such as 4-6", file=sys.stderr)
        return 2
    _emit(run_renormalized(cfg).summary())
    return 0


def cmd_calibrate(args) -> int:
    cfg = build_config(args)
    if cfg.target_epsilon is None:
        cfg.target_epsilon = 1e-10
    n = cfg.qubit_list[0]

    def runner(db: float):
        sub = BenchmarkConfig.from_dict({**cfg.to_dict(), "output": None})
        sub.solver = sub.solver.replace(delta_beta=max(db, 1e-12))
        return run_single(sub, n)

    def merit(r) -> float:
        if not r.reached_target or r.report.unstable:
            return math.inf
        return r.final.ledger.rescaled_cost

    res = calibrate_step(runner, merit, (args.lo, args.hi), args.budget)
    _emit({"method": cfg.solver.method, "qubits": n, "delta_beta": res.delta_beta, "rescaled_cost": res.merit, "unimodal": res.unimodal, "samples": res.samples})
    return 0


def cmd_oracle(args) -> int:
    if args.fixtures:
        text = generate_fixtures()
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    cfg = build_config(args)
    rows = []
    for n in cfg.qubit_list:
        p = dense_problem(cfg.grid(n), benchmark_potential(cfg.problem, cfg.params))
        rows.append({"problem": cfg.problem, "qubits": n, "L": cfg.L, "E0": p.ground_energy})
    _emit(rows)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tnpde", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="run one solver at one or more sizes")
    _common(p)
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("sweep", help="repeat a run over truncation tolerances")
    _common(p)
    p.add_argument("--trunc-tols", default=SWEEP_DEFAULT, help=f"comma list (default {SWEEP_DEFAULT})")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("renormalize", help="interpolation warm start against cold start")
    _common(p)
    p.set_defaults(func=cmd_renormalize)
    p = sub.add_parser("calibrate", help="golden-section search for delta-beta")
    _common(p)
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--budget", type=int, default=12)
    p.set_defaults(func=cmd_calibrate)
    p = sub.add_parser("oracle", help="dense reference ground energies")
    _common(p)
    p.add_argument("--fixtures", action="store_true", help="regenerate the frozen fixture table")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"tnpde: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
