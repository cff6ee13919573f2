"""Single solves and seed sweeps over the benchmark parameter sets."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import exact
from .assign import MODES, PipelineParams, run_pipeline
from .grid import lookup_shape
from .instance import (
    DEMAND_CONVENTION,
    TABLE_DEMANDS_KBPS,
    TABLE_LATENCIES_MS,
    Assignment,
    Instance,
    SimulationConfig,
    make_assignment,
    random_instance,
)

log = logging.getLogger(__name__)

MODE_EXACT = "exact"
FIXED_PREFIX = "fixed:"
FIXED_SHAPES = ("0.5ms-15kHz", "0.25ms-30kHz", "0.125ms-60kHz")

SWEEP_TAU = "tau"
SWEEP_DEMAND = "demand"
SWEEP_SETS = {SWEEP_TAU: TABLE_LATENCIES_MS, SWEEP_DEMAND: TABLE_DEMANDS_KBPS}
DEFAULT_MODES = {
    SWEEP_TAU: ("lp+ld",) + tuple(FIXED_PREFIX + s for s in FIXED_SHAPES),
    SWEEP_DEMAND: ("rate", "lp", "ld", "lp+ld"),
}
DEFAULT_SEEDS = 20

COLUMNS = (
    "sweep", "value", "seed", "mode", "feasible", "objective_bits", "rate_kbps",
    "unmet", "exact_status", "exact_value", "gap", "n_gap", "rho", "arm", "error",
)
MEAN = "mean"


def is_valid_mode(mode: str) -> bool:
    return mode in MODES or mode == MODE_EXACT or mode.startswith(FIXED_PREFIX)


@dataclass
class SolveResult:
    mode: str
    assignment: Assignment
    diagnostics: dict
    exact: exact.ExactResult | None = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "assignment": self.assignment.to_dict(),
            "diagnostics": self.diagnostics,
            "exact": None if self.exact is None else self.exact.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def _exact_diag(mode: str, res: exact.ExactResult, a: Assignment) -> dict:
    return {
        "mode": mode,
        "objective": a.objective,
        "feasible": a.feasible,
        "unmet": list(a.unmet),
        "status": res.status,
        "proven": res.proven,
        "nodes": res.nodes,
        "bound_gap": res.bound_gap if math.isfinite(res.bound_gap) else "inf",
    }


def solve(inst: Instance, mode: str, params: PipelineParams | None = None, time_limit: float = 300.0,
          exact_backend: str = "highs") -> SolveResult:
    """Run one solver mode; block ids in the result always refer to ``inst``."""
    params = params or PipelineParams()
    if mode in MODES:
        a, diag = run_pipeline(inst, mode, params)
        return SolveResult(mode, a, diag.to_dict())
    if mode == MODE_EXACT:
        res = exact.solve_exact(inst, time_limit, exact_backend)
        a = res.assignment if res.assignment is not None else make_assignment(inst, [])
        return SolveResult(mode, a, _exact_diag(mode, res, a), res)
    if mode.startswith(FIXED_PREFIX):
        key = mode[len(FIXED_PREFIX):]
        try:
            shape = lookup_shape(key, inst.shapes)
        except KeyError:
            raise ValueError(f"shape {key!r} is not part of this instance") from None
        keep = [b.id for b in inst.blocks if b.shape.id == shape.id]
        res = exact.solve_exact(inst.restrict([shape.id]), time_limit, exact_backend)
        pairs = [] if res.assignment is None else [(keep[b], k) for b, k in res.assignment.pairs]
        a = make_assignment(inst, pairs)
        return SolveResult(mode, a, _exact_diag(mode, res, a), res)
    raise ValueError(f"unknown mode {mode!r}")


def horizon_ms(inst: Instance) -> float:
    return float(inst.meta.get("horizon_ms", inst.grid.total_time_ms))


def rate_kbps(inst: Instance, a: Assignment) -> float:
    """Mean per-user capacity-service rate; a schedule that misses a demand counts as zero."""
    n_cap = len(inst.capacity_ids)
    if not a.feasible or n_cap == 0:
        return 0.0
    return a.objective / horizon_ms(inst) / n_cap


# -- sweeps --------------------------------------------------------------

@dataclass
class SweepSpec:
    sweep: str
    values: tuple
    seeds: int = DEFAULT_SEEDS
    modes: tuple = ()
    with_exact: bool = False
    time_limit: float = 300.0
    exact_backend: str = "highs"
    config: SimulationConfig = field(default_factory=SimulationConfig)
    params: PipelineParams = field(default_factory=PipelineParams)

    def __post_init__(self):
        if self.sweep not in SWEEP_SETS:
            raise ValueError(f"sweep must be one of {sorted(SWEEP_SETS)}")
        allowed = SWEEP_SETS[self.sweep]
        bad = [v for v in self.values if not any(math.isclose(v, a) for a in allowed)]
        if bad:
            raise ValueError(f"{self.sweep} values {bad} are outside the benchmark set {list(allowed)}")
        if self.seeds < 1:
            raise ValueError("need at least one seed")
        self.modes = tuple(self.modes) or DEFAULT_MODES[self.sweep]
        for m in self.modes:
            if not is_valid_mode(m):
                raise ValueError(f"unknown mode {m!r}")

    def config_for(self, value: float) -> SimulationConfig:
        if self.sweep == SWEEP_TAU:
            return replace(self.config, latency_ms=float(value))
        return replace(self.config, demand_kbps=float(value))

    def metadata(self) -> dict:
        return {
            "sweep": self.sweep,
            "values": list(self.values),
            "seeds": self.seeds,
            "modes": list(self.modes),
            "with_exact": self.with_exact,
            "exact_time_limit_s": self.time_limit,
            "exact_backend": self.exact_backend,
            "demand_convention": DEMAND_CONVENTION,
            "rate_convention": "rate_kbps = objective_bits / horizon_ms / |K^c|, 0 when a demand is unmet",
            "gap_convention": "gap over proven optima only; 1.0 when the heuristic misses a demand the optimum meets",
            "columns": list(COLUMNS),
            "config": self.config.to_dict(),
            "rho_grid": list(self.params.rho_grid),
            "max_subgradient_iters": self.params.max_subgradient_iters,
        }


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(round(x, 9))
    return str(x)


def _gap(a: Assignment, ex: exact.ExactResult | None):
    if ex is None or not ex.proven or ex.status != exact.OPTIMAL:
        return None
    if not a.feasible:
        return 1.0
    return exact.optimality_gap(a.objective, ex.value)


def run_point(spec: SweepSpec, value: float, seed: int) -> list[dict]:
    """All modes on one (value, seed) instance; failures are recorded per row."""
    base = {"sweep": spec.sweep, "value": value, "seed": seed}
    try:
        inst = random_instance(spec.config_for(value), seed)
    except Exception as e:  # noqa: BLE001 - recorded in the row
        return [dict(base, mode=m, error=f"{type(e).__name__}: {e}") for m in spec.modes]
    ex = None
    if spec.with_exact:
        try:
            ex = exact.solve_exact(inst, spec.time_limit, spec.exact_backend)
        except Exception as e:  # noqa: BLE001
            log.warning("exact solve failed at %s=%s seed %s: %s", spec.sweep, value, seed, e)
    rows = []
    for mode in spec.modes:
        row = dict(base, mode=mode)
        if ex is not None:
            row["exact_status"] = ex.status
            row["exact_value"] = ex.value
        try:
            res = solve(inst, mode, spec.params, spec.time_limit, spec.exact_backend)
        except Exception as e:  # noqa: BLE001
            row["error"] = f"{type(e).__name__}: {e}"
            rows.append(row)
            continue
        a = res.assignment
        row.update(
            feasible=a.feasible,
            objective_bits=a.objective,
            rate_kbps=rate_kbps(inst, a),
            unmet=" ".join(map(str, a.unmet)),
            rho=res.diagnostics.get("rho"),
            arm=res.diagnostics.get("arm"),
        )
        g = _gap(a, ex)
        if g is not None:
            row["gap"] = g
            row["n_gap"] = 1
        rows.append(row)
    return rows


def aggregate(rows: list[dict]) -> list[dict]:
    """One mean row per (sweep value, mode) over its seeds."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["sweep"], r["value"], r["mode"]), []).append(r)
    out = []
    for (sweep, value, mode), rs in groups.items():
        ok = [r for r in rs if not r.get("error")]
        gaps = [r["gap"] for r in ok if r.get("gap") is not None]
        out.append({
            "sweep": sweep, "value": value, "seed": MEAN, "mode": mode,
            "feasible": sum(bool(r.get("feasible")) for r in ok) / len(ok) if ok else None,
            "objective_bits": sum(r["objective_bits"] for r in ok) / len(ok) if ok else None,
            "rate_kbps": sum(r["rate_kbps"] for r in ok) / len(ok) if ok else None,
            "gap": sum(gaps) / len(gaps) if gaps else None,
            "n_gap": len(gaps),
            "error": f"{len(rs) - len(ok)} failed" if len(ok) < len(rs) else None,
        })
    return out


def _sort_key(r: dict):
    seed = r["seed"]
    return (r["sweep"], float(r["value"]), r["mode"], seed == MEAN, seed if seed != MEAN else 0)


def run_sweep(spec: SweepSpec, jobs: int = 1, progress=None) -> list[dict]:
    points = [(v, s) for v in spec.values for s in range(spec.seeds)]
    rows: list[dict] = []
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            for chunk in pool.map(run_point, [spec] * len(points), *zip(*points)):
                rows.extend(chunk)
    else:
        for v, s in points:
            rows.extend(run_point(spec, v, s))
            if progress:
                progress(v, s)
    rows.extend(aggregate(rows))
    rows.sort(key=_sort_key)
    return rows


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in COLUMNS])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_metadata(spec: SweepSpec, path) -> Path:
    meta = Path(str(path) + ".meta.json")
    meta.write_text(json.dumps(spec.metadata(), sort_keys=True, indent=1) + "\n")
    return meta
