"""Command-line entry point: ``flexnum {generate,solve,experiment,validate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .assign import RHO_GRID, PipelineParams
from .exact import BACKENDS
from .instance import Assignment, ConfigError, Instance, SimulationConfig, check_assignment, random_instance

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNMET = 2

log = logging.getLogger("flexnum")


class CliError(Exception):
    pass


def _key_line(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for n, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return n
    return None


def load_config(path: str | None) -> SimulationConfig:
    """Parse a JSON config; every error names the file and the offending line."""
    if path is None:
        return SimulationConfig()
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise CliError(f"{path}:{e.lineno}:{e.colno}: malformed JSON: {e.msg}") from None
    if not isinstance(data, dict):
        raise CliError(f"{path}:1: config must be a JSON object")
    try:
        return SimulationConfig.from_dict(data)
    except ConfigError as e:
        line = _key_line(text, e.key) or 1
        raise CliError(f"{path}:{line}: {e.key}: {e.message}") from None


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise CliError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _params(args) -> PipelineParams:
    rho = _parse_floats(args.rho_grid) if args.rho_grid else RHO_GRID
    if any(not 0 < r <= 1 for r in rho):
        raise CliError("--rho-grid values must lie in (0, 1]")
    return PipelineParams(rho_grid=rho, max_subgradient_iters=args.max_subgradient_iters)


# -- commands -------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    inst = random_instance(cfg, args.seed)
    text = inst.to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    lat, cap = inst.latency_ids, inst.capacity_ids
    print(f"|B|={len(inst.blocks)} |I|={inst.grid.n_units} |K^l|={len(lat)} |K^c|={len(cap)} "
          f"grid={inst.grid.n_time}x{inst.grid.n_freq}", file=sys.stderr)
    masked = [k for k in lat if not np.any(inst.rates[:, k] > 0)]
    if lat and len(masked) == len(lat):
        print(f"warning: all latency-service rates are masked (deadline {cfg.latency_ms} ms "
              "ends before every block)", file=sys.stderr)
    elif masked:
        print(f"warning: latency services {masked} have every rate masked", file=sys.stderr)
    return EXIT_OK


def cmd_solve(args) -> int:
    if not ex.is_valid_mode(args.mode):
        raise CliError(f"unknown mode {args.mode!r}")
    inst = Instance.load(args.instance)
    params = _params(args)
    trace_fh = open(args.trace, "w") if args.trace else None
    try:
        params.trace = trace_fh
        res = ex.solve(inst, args.mode, params, args.time_limit, args.exact_backend)
    except ValueError as e:
        raise CliError(str(e)) from None
    finally:
        if trace_fh:
            trace_fh.close()
    text = res.to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    a = res.assignment
    print(f"mode={args.mode} objective={a.objective:.6g} bits rate={ex.rate_kbps(inst, a):.6g} kbps "
          f"feasible={a.feasible} unmet={list(a.unmet)}", file=sys.stderr)
    return EXIT_OK if a.feasible else EXIT_UNMET


def cmd_validate(args) -> int:
    inst = Instance.load(args.instance)
    data = json.loads(Path(args.result).read_text())
    a = Assignment.from_dict(data["assignment"])
    try:
        rep = check_assignment(inst, a)
    except ValueError as e:
        raise CliError(f"result does not match the instance: {e}") from None
    problems = []
    if rep.overlapping:
        problems.append(f"overlapping blocks {list(rep.overlapping)}")
    if rep.repeated_blocks:
        problems.append(f"repeated blocks {list(rep.repeated_blocks)}")
    if abs(rep.objective - a.objective) > 1e-6 * max(1.0, abs(rep.objective)):
        problems.append(f"stored objective {a.objective} != recomputed {rep.objective}")
    if rep.feasible != a.feasible or tuple(rep.unmet) != tuple(a.unmet):
        problems.append("stored feasibility disagrees with the recomputed report")
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return EXIT_ERROR
    print(f"valid: objective={rep.objective:.6g} feasible={rep.feasible} unmet={list(rep.unmet)}")
    return EXIT_OK if rep.feasible else EXIT_UNMET


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    values = _parse_floats(args.values) if args.values else ex.SWEEP_SETS[args.sweep]
    modes = tuple(m for m in args.modes.split(",") if m) if args.modes else ()
    try:
        spec = ex.SweepSpec(args.sweep, values, args.seeds, modes, args.exact, args.time_limit,
                            args.exact_backend, cfg, _params(args))
    except ValueError as e:
        raise CliError(str(e)) from None

    def progress(v, s):
        log.info("%s=%g seed %d done", args.sweep, v, s)

    rows = ex.run_sweep(spec, args.jobs, progress)
    out = args.out or f"{args.sweep}_sweep.csv"
    ex.write_csv(rows, out)
    meta = ex.write_metadata(spec, out)
    print(f"wrote {out} ({len(rows)} rows) and {meta}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flexnum", description=__doc__)
    p.add_argument("--print-defaults", action="store_true", help="print the default JSON config and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    def solver_flags(sp):
        sp.add_argument("--time-limit", type=float, default=300.0, help="exact solver limit per instance (s)")
        sp.add_argument("--exact-backend", choices=BACKENDS, default="highs")
        sp.add_argument("--rho-grid", help="comma-separated LP thresholds (default 0.05..0.95)")
        sp.add_argument("--max-subgradient-iters", type=int, default=200)

    g = sub.add_parser("generate", help="draw a random instance")
    g.add_argument("--config")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--mode", default="lp+ld", help="rate|lp|ld|lp+ld|exact|fixed:<shape>")
    s.add_argument("--out")
    s.add_argument("--trace", help="CSV file for the subgradient trace")
    solver_flags(s)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("experiment", help="seed sweep over latency tolerance or demand")
    e.add_argument("--config")
    e.add_argument("--sweep", choices=sorted(ex.SWEEP_SETS), required=True)
    e.add_argument("--values", help="comma-separated subset of the benchmark values")
    e.add_argument("--seeds", type=int, default=ex.DEFAULT_SEEDS)
    e.add_argument("--modes", help="comma-separated solver modes")
    e.add_argument("--exact", action="store_true", help="also solve exactly and report gaps")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--out")
    solver_flags(e)
    e.set_defaults(func=cmd_experiment)

    v = sub.add_parser("validate", help="re-check a result file against its instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--result", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_defaults:
        sys.stdout.write(json.dumps(SimulationConfig().to_dict(), indent=1) + "\n")
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except (CliError, OSError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
