"""Exact optimum for benchmarking: exhaustive search and LP-based branch and bound."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import lp
from .instance import Assignment, Instance, demand_met, make_assignment

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
TIMEOUT = "timeout"

INTEGRALITY_TOL = 1e-6


class SearchTooLarge(RuntimeError):
    pass


@dataclass
class ExactResult:
    assignment: Assignment | None
    value: float | None
    proven: bool
    status: str
    nodes: int = 0
    wall_time: float = 0.0
    bound_gap: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.assignment is not None and self.assignment.feasible

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "proven": self.proven,
            "value": self.value,
            "nodes": self.nodes,
            "bound_gap": self.bound_gap,
            "assignment": None if self.assignment is None else self.assignment.to_dict(),
        }


def _best_capacity(inst: Instance):
    """Per block, the capacity service with the highest rate (lowest id on ties)."""
    cap = inst.capacity_ids
    nb = len(inst.blocks)
    if not cap or nb == 0:
        return np.full(nb, -1), np.zeros(nb)
    sub = inst.rates[:, cap]
    j = np.argmax(sub, axis=1)
    return np.asarray(cap)[j], sub[np.arange(nb), j]


def brute_force(inst: Instance, max_nodes: int = 10_000_000) -> ExactResult:
    """Depth-first enumeration of per-block decisions.

    A block is left out, given to a latency service that is still short of
    its demand, or given to its best capacity service.  Other choices are
    dominated.  Branches are cut when they cannot beat the incumbent or can
    no longer meet a demand.
    """
    t_start = time.perf_counter()
    blocks = inst.blocks
    order = sorted(range(len(blocks)), key=lambda b: (min(blocks[b].coverage), b))
    cover = [blocks[b].coverage for b in order]
    best_k, best_r = _best_capacity(inst)
    cap_k = [int(best_k[b]) for b in order]
    cap_r = [float(best_r[b]) for b in order]
    latency = inst.latency_ids
    demand = {k: inst.services[k].demand_bits for k in latency}
    lat_r = [[(k, float(inst.rates[b, k])) for k in latency if inst.rates[b, k] > 0] for b in order]
    n = len(order)
    n_units = inst.grid.n_units

    suffix = {k: np.zeros(n + 1) for k in latency}
    for k in latency:
        col = np.array([inst.rates[b, k] for b in order])
        suffix[k][:n] = np.cumsum(col[::-1])[::-1] if n else col
    suffix = {k: v.tolist() for k, v in suffix.items()}

    dens = [0.0] * n_units
    last = [-1] * n_units
    for pos in range(n):
        for i in cover[pos]:
            dens[i] = max(dens[i], cap_r[pos] / len(cover[pos]))
            last[i] = pos
    alive = [[i for i in range(n_units) if last[i] >= pos and dens[i] > 0] for pos in range(n + 1)]

    used = [False] * n_units
    delivered = dict.fromkeys(latency, 0.0)
    short = set(k for k in latency if demand[k] > 0)
    picked: list[tuple[int, int]] = []
    best = {"value": -math.inf, "pairs": None}
    nodes = 0

    def dfs(pos: int, obj: float):
        nonlocal nodes
        nodes += 1
        if nodes > max_nodes:
            raise SearchTooLarge(
                f"brute force exceeded {max_nodes} nodes; use branch_and_bound for this instance"
            )
        for k in short:
            if delivered[k] + suffix[k][pos] < demand[k] - 1e-9 * max(1.0, demand[k]):
                return
        if pos == n:
            if not short and obj > best["value"]:
                best["value"] = obj
                best["pairs"] = list(picked)
            return
        bound = obj + sum(dens[i] for i in alive[pos] if not used[i])
        if bound <= best["value"]:
            return
        cov = cover[pos]
        if not any(used[i] for i in cov):
            b = order[pos]
            for i in cov:
                used[i] = True
            for k, r in lat_r[pos]:
                if k in short:
                    delivered[k] += r
                    met = demand_met(delivered[k], demand[k])
                    if met:
                        short.discard(k)
                    picked.append((b, k))
                    dfs(pos + 1, obj)
                    picked.pop()
                    if met:
                        short.add(k)
                    delivered[k] -= r
            if cap_r[pos] > 0:
                picked.append((b, cap_k[pos]))
                dfs(pos + 1, obj + cap_r[pos])
                picked.pop()
            for i in cov:
                used[i] = False
        dfs(pos + 1, obj)

    dfs(0, 0.0)
    elapsed = time.perf_counter() - t_start
    if best["pairs"] is None:
        return ExactResult(None, None, True, INFEASIBLE, nodes, elapsed)
    a = make_assignment(inst, best["pairs"])
    return ExactResult(a, a.objective, True, OPTIMAL, nodes, elapsed)


class _Model:
    """Reduced column set shared by every node: best capacity column per block plus useful latency columns."""

    def __init__(self, inst: Instance):
        self.inst = inst
        best_k, best_r = _best_capacity(inst)
        cols, rate = [], []
        for b in range(len(inst.blocks)):
            if best_r[b] > 0:
                cols.append((b, int(best_k[b])))
                rate.append(best_r[b])
            for k in inst.latency_ids:
                if inst.rates[b, k] > 0:
                    cols.append((b, k))
                    rate.append(inst.rates[b, k])
        self.cols = cols
        self.rate = np.asarray(rate, dtype=float)
        self.is_lat = np.array([inst.services[k].is_latency for _, k in cols], dtype=bool)
        self.cover = [inst.blocks[b].coverage for b, _ in cols]

    def node_lp(self, fixed1: frozenset, fixed0: frozenset):
        """LP over free columns, or None when the fixings already violate a constraint."""
        inst = self.inst
        used: set[int] = set()
        const = 0.0
        got = dict.fromkeys(inst.latency_ids, 0.0)
        for j in fixed1:
            cov = self.cover[j]
            if used.intersection(cov):
                return None
            used.update(cov)
            b, k = self.cols[j]
            if self.is_lat[j]:
                got[k] += self.rate[j]
            else:
                const += self.rate[j]
        need = {k: inst.services[k].demand_bits - v for k, v in got.items()
                if not demand_met(v, inst.services[k].demand_bits)}
        free_cols = [
            j for j in range(len(self.cols))
            if j not in fixed1 and j not in fixed0
            and not used.intersection(self.cover[j])
            and (not self.is_lat[j] or self.cols[j][1] in need)
        ]
        units = sorted({i for j in free_cols for i in self.cover[j]})
        unit_row = {i: r for r, i in enumerate(units)}
        lat_rows = sorted(need)
        lat_row = {k: len(units) + r for r, k in enumerate(lat_rows)}
        m, n = len(units) + len(lat_rows), len(free_cols)
        A = np.zeros((m, n))
        c = np.zeros(n)
        for col, j in enumerate(free_cols):
            for i in self.cover[j]:
                A[unit_row[i], col] = 1.0
            k = self.cols[j][1]
            if self.is_lat[j]:
                # a binary column can never contribute more than the residual need
                A[lat_row[k], col] = min(self.rate[j], need[k])
            else:
                c[col] = self.rate[j]
        rhs = np.concatenate([np.ones(len(units)), [need[k] for k in lat_rows]])
        senses = [lp.LE] * len(units) + [lp.GE] * len(lat_rows)
        prog = lp.LinearProgram(c, A, senses, rhs, np.zeros(n), np.ones(n), list(free_cols))
        return prog, const


def branch_and_bound(inst: Instance, time_limit: float = 300.0, incumbent: Assignment | None = None,
                     warm_start: bool = True, lp_method: str = "simplex") -> ExactResult:
    """Depth-first LP branch and bound; the better-bounded child is explored first.

    Branches on the fractional variable closest to 0.5.  With no incumbent
    given and ``warm_start`` set, the LP+LD heuristic seeds one.
    """
    t_start = time.perf_counter()
    deadline = t_start + time_limit
    model = _Model(inst)
    if incumbent is None and warm_start:
        from .assign import MODE_LP_PLUS_LD, run_pipeline

        incumbent, _ = run_pipeline(inst, MODE_LP_PLUS_LD)
    best = incumbent if incumbent is not None and incumbent.feasible else None
    best_val = best.objective if best is not None else -math.inf
    nodes = 0

    def evaluate(fixed1, fixed0):
        nonlocal nodes
        nodes += 1
        built = model.node_lp(fixed1, fixed0)
        if built is None:
            return None
        prog, const = built
        sol = lp.solve_lp(prog, method=lp_method)
        if sol.status == lp.INFEASIBLE:
            return None
        if sol.status != lp.OPTIMAL:
            raise RuntimeError(f"node LP ended with {sol.status}")
        return const + sol.objective, sol, fixed1, fixed0

    def tol(v):
        return 1e-9 * max(1.0, abs(v)) if math.isfinite(v) else 0.0

    root = evaluate(frozenset(), frozenset())
    if root is None:
        return ExactResult(None, None, True, INFEASIBLE, nodes, time.perf_counter() - t_start)
    stack = [root]
    timed_out = False
    while stack:
        if time.perf_counter() > deadline:
            timed_out = True
            break
        bound, sol, fixed1, fixed0 = stack.pop()
        if bound <= best_val + tol(best_val):
            continue
        frac = np.abs(sol.x - 0.5)
        j_local = int(np.argmin(frac)) if frac.size else -1
        if frac.size == 0 or frac[j_local] >= 0.5 - INTEGRALITY_TOL:
            ones = {sol.columns[i] for i in np.flatnonzero(sol.x > 0.5)}
            pairs = [model.cols[j] for j in fixed1 | ones]
            cand = make_assignment(inst, pairs)
            if cand.feasible and (best is None or cand.objective > best_val):
                best, best_val = cand, cand.objective
            continue
        j = sol.columns[j_local]
        children = [evaluate(fixed1 | {j}, fixed0), evaluate(fixed1, fixed0 | {j})]
        children = [ch for ch in children if ch is not None and ch[0] > best_val + tol(best_val)]
        children.sort(key=lambda ch: ch[0])
        stack.extend(children)
    elapsed = time.perf_counter() - t_start
    if timed_out:
        open_bound = max(node[0] for node in stack) if stack else best_val
        gap = max(0.0, open_bound - best_val) if best is not None else math.inf
        log.info("branch and bound timed out after %d nodes", nodes)
        return ExactResult(best, best_val if best is not None else None, False, TIMEOUT, nodes, elapsed, gap)
    if best is None:
        return ExactResult(None, None, True, INFEASIBLE, nodes, elapsed)
    return ExactResult(best, best_val, True, OPTIMAL, nodes, elapsed)


def highs_milp(inst: Instance, time_limit: float = 300.0) -> ExactResult:
    """Same reduced formulation handed to the HiGHS MILP solver.

    Far faster than :func:`branch_and_bound` at table scale thanks to its
    presolve and cutting planes; used as the benchmark oracle there.
    """
    from scipy.optimize import Bounds, LinearConstraint, milp

    t_start = time.perf_counter()
    model = _Model(inst)
    prog, _ = model.node_lp(frozenset(), frozenset())
    n = prog.c.size
    if n == 0:
        elapsed = time.perf_counter() - t_start
        if inst.latency_ids and any(inst.services[k].demand_bits > 0 for k in inst.latency_ids):
            return ExactResult(None, None, True, INFEASIBLE, 0, elapsed)
        a = make_assignment(inst, [])
        return ExactResult(a, 0.0, True, OPTIMAL, 0, elapsed)
    senses = np.asarray(prog.senses)
    lo = np.where(senses == lp.GE, prog.rhs, -np.inf)
    hi = np.where(senses == lp.LE, prog.rhs, np.inf)
    res = milp(-prog.c, constraints=LinearConstraint(prog.A, lo, hi), integrality=np.ones(n),
               bounds=Bounds(0, 1), options={"time_limit": float(time_limit)})
    elapsed = time.perf_counter() - t_start
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 2:
        return ExactResult(None, None, True, INFEASIBLE, nodes, elapsed)
    if res.x is None:
        return ExactResult(None, None, False, TIMEOUT, nodes, elapsed, math.inf)
    pairs = [model.cols[prog.columns[i]] for i in np.flatnonzero(res.x > 0.5)]
    a = make_assignment(inst, pairs)
    if res.status == 0 and a.feasible:
        return ExactResult(a, a.objective, True, OPTIMAL, nodes, elapsed)
    bound = -float(res.mip_dual_bound) if res.mip_dual_bound is not None else math.inf
    if not a.feasible:
        log.warning("MILP incumbent fails the exact feasibility check")
        return ExactResult(None, None, False, TIMEOUT, nodes, elapsed, math.inf)
    return ExactResult(a, a.objective, False, TIMEOUT, nodes, elapsed, max(0.0, bound - a.objective))


BACKENDS = ("highs", "bnb", "brute")


def solve_exact(inst: Instance, time_limit: float = 300.0, backend: str = "highs") -> ExactResult:
    if backend == "highs":
        return highs_milp(inst, time_limit)
    if backend == "bnb":
        return branch_and_bound(inst, time_limit)
    if backend == "brute":
        return brute_force(inst)
    raise ValueError(f"unknown exact backend {backend!r}; choose from {BACKENDS}")


def optimality_gap(heuristic_value: float, exact_value: float) -> float:
    """Relative shortfall (exact - heuristic) / exact of a maximisation heuristic."""
    if heuristic_value > exact_value + 1e-6:
        raise AssertionError(f"heuristic {heuristic_value} exceeds the optimum {exact_value}")
    if exact_value == 0:
        return 0.0
    return max(0.0, (exact_value - heuristic_value) / exact_value)
