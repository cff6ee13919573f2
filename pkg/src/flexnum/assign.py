"""Greedy block assignment driven by a utility matrix, and the utility pipelines."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import lagrangian, lp
from .instance import Assignment, Instance, demand_met, make_assignment
from .utility import LD, LP, RATE, UtilityMatrix

log = logging.getLogger(__name__)

RHO_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))

MODE_RATE = "rate"
MODE_LP = "lp"
MODE_LD = "ld"
MODE_LP_PLUS_LD = "lp+ld"
MODES = (MODE_RATE, MODE_LP, MODE_LD, MODE_LP_PLUS_LD)


@dataclass(frozen=True)
class SeedSet:
    """Initial pairs for BA; blocks are distinct and pairwise non-overlapping."""

    pairs: tuple[tuple[int, int], ...] = ()

    def validate(self, inst: Instance) -> None:
        seen_units: set[int] = set()
        seen_blocks: set[int] = set()
        for b, _ in self.pairs:
            if b in seen_blocks:
                raise ValueError(f"block {b} appears twice in the seed set")
            cov = inst.blocks[b].coverage
            if seen_units.intersection(cov):
                raise ValueError(f"seed block {b} overlaps another seed block")
            seen_blocks.add(b)
            seen_units.update(cov)


def rate_utility(inst: Instance) -> UtilityMatrix:
    return UtilityMatrix(inst.rates.copy(), RATE)


def _order(u: np.ndarray, r: np.ndarray, b: np.ndarray, k: np.ndarray) -> np.ndarray:
    # utility desc, rate desc, block asc, service asc
    return np.lexsort((k, b, -r, -u))


def seed_from_lp(inst: Instance, u: UtilityMatrix, rho: float) -> SeedSet:
    """Admit pairs with utility >= rho greedily, highest first, skipping conflicts."""
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    bb, kk = np.nonzero(u.values >= rho)
    if bb.size == 0:
        return SeedSet()
    order = _order(u.values[bb, kk], inst.rates[bb, kk], bb, kk)
    used = np.zeros(inst.grid.n_units, dtype=bool)
    taken = set()
    pairs = []
    for idx in order:
        b, k = int(bb[idx]), int(kk[idx])
        cov = inst.blocks[b].coverage
        if b in taken or used[list(cov)].any():
            continue
        taken.add(b)
        used[list(cov)] = True
        pairs.append((b, k))
    return SeedSet(tuple(pairs))


def ba(inst: Instance, S: SeedSet | None, u: UtilityMatrix) -> Assignment:
    """Algorithm BA: latency services first, then capacity services, by descending utility.

    Utilities are fixed, so repeatedly taking the argmax over surviving pairs
    is the same as one pass over the pairs sorted once up front.
    """
    S = S or SeedSet()
    if u.shape != inst.rates.shape:
        raise ValueError(f"utility shape {u.shape} does not match rates {inst.rates.shape}")
    S.validate(inst)
    rates = inst.rates
    uv = u.values
    used = bytearray(inst.grid.n_units)
    cover = [b.coverage for b in inst.blocks]
    chosen = list(S.pairs)
    for b, _ in chosen:
        for i in cover[b]:
            used[i] = 1

    latency = inst.latency_ids
    delivered = {k: 0.0 for k in latency}
    for b, k in chosen:
        if k in delivered:
            delivered[k] += rates[b, k]
    open_lat = {k for k in latency if not demand_met(delivered[k], inst.services[k].demand_bits)}

    def free(b):
        for i in cover[b]:
            if used[i]:
                return False
        return True

    def take(b, k):
        for i in cover[b]:
            used[i] = 1
        chosen.append((b, k))

    # phase 1: zero-rate pairs cannot advance a demand; zero-utility pairs
    # with positive rate come last, by rate, as the total order dictates
    if open_lat:
        lat = np.asarray(sorted(open_lat))
        sub_u, sub_r = uv[:, lat], rates[:, lat]
        bb, kj = np.nonzero(sub_r > 0)
        kk = lat[kj]
        for idx in _order(sub_u[bb, kj], sub_r[bb, kj], bb, kk):
            b, k = int(bb[idx]), int(kk[idx])
            if k not in open_lat or not free(b):
                continue
            take(b, k)
            delivered[k] += rates[b, k]
            if demand_met(delivered[k], inst.services[k].demand_bits):
                open_lat.discard(k)
                if not open_lat:
                    break

    # phase 2: positive utilities first, then the rest by rate
    cap = np.asarray(inst.capacity_ids, dtype=int)
    if cap.size:
        sub_u, sub_r = uv[:, cap], rates[:, cap]
        bb, kj = np.nonzero(sub_r > 0)
        uu, rr, kk = sub_u[bb, kj], sub_r[bb, kj], cap[kj]
        pos = uu > 0
        first = _order(uu[pos], rr[pos], bb[pos], kk[pos])
        rest = _order(np.zeros((~pos).sum()), rr[~pos], bb[~pos], kk[~pos])
        pb = np.concatenate([bb[pos][first], bb[~pos][rest]])
        pk = np.concatenate([kk[pos][first], kk[~pos][rest]])
        for b, k in zip(pb.tolist(), pk.tolist()):
            if free(b):
                take(b, k)
    return make_assignment(inst, chosen)


def better(a: Assignment, b: Assignment | None) -> bool:
    """Feasible beats infeasible, then higher objective, then fewer blocks."""
    if b is None:
        return True
    return (a.feasible, a.objective, -a.n_blocks) > (b.feasible, b.objective, -b.n_blocks)


@dataclass
class PipelineParams:
    rho_grid: tuple = RHO_GRID
    max_subgradient_iters: int = 200
    lp_method: str = "simplex"
    trace: object = None


@dataclass
class Diagnostics:
    mode: str
    objective: float = 0.0
    feasible: bool = False
    unmet: tuple = ()
    rho: float | None = None
    lp_status: str | None = None
    lp_objective: float | None = None
    iterations: int = 0
    g_best: float | None = None
    arm: str | None = None
    arms: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "objective": self.objective,
            "feasible": self.feasible,
            "unmet": list(self.unmet),
            "rho": self.rho,
            "lp_status": self.lp_status,
            "lp_objective": self.lp_objective,
            "iterations": self.iterations,
            "g_best": self.g_best if self.g_best is None or np.isfinite(self.g_best) else "inf",
            "arm": self.arm,
            "arms": self.arms,
            "notes": self.notes,
        }


def _lp_arm(inst, params, diag):
    sol = lp.solve_lp(lp.build_lp(inst), method=params.lp_method)
    diag.lp_status = sol.status
    if sol.status != lp.OPTIMAL:
        diag.notes.append(f"LP arm skipped: relaxation {sol.status}")
        return None
    diag.lp_objective = sol.objective
    u = lp.lp_utility(sol)
    best, best_rho = None, None
    for rho in params.rho_grid:
        a = ba(inst, seed_from_lp(inst, u, rho), u)
        if better(a, best):
            best, best_rho = a, rho
    diag.arms[MODE_LP] = {"objective": best.objective, "feasible": best.feasible, "rho": best_rho}
    diag.rho = best_rho
    return best


def _ld_arm(inst, params, diag):
    state = lagrangian.subgradient_run(inst, params.max_subgradient_iters, trace=params.trace)
    diag.iterations = state.h
    diag.g_best = state.g_best
    if state.infeasible:
        diag.notes.append(f"LD: services {list(state.uncoverable)} cannot be covered by any block set")
    a = ba(inst, SeedSet(), lagrangian.ld_utility(state))
    diag.arms[MODE_LD] = {"objective": a.objective, "feasible": a.feasible}
    return a


def run_pipeline(inst: Instance, mode: str = MODE_LP_PLUS_LD, params: PipelineParams | None = None):
    """Solve heuristically; returns ``(assignment, diagnostics)``."""
    params = params or PipelineParams()
    diag = Diagnostics(mode=mode)
    if mode == MODE_RATE:
        result = ba(inst, SeedSet(), rate_utility(inst))
        diag.arm = MODE_RATE
    elif mode == MODE_LP:
        result = _lp_arm(inst, params, diag)
        diag.arm = MODE_LP
        if result is None:
            result = ba(inst, SeedSet(), UtilityMatrix(np.zeros_like(inst.rates), LP))
    elif mode == MODE_LD:
        result = _ld_arm(inst, params, diag)
        diag.arm = MODE_LD
    elif mode == MODE_LP_PLUS_LD:
        lp_res = _lp_arm(inst, params, diag)
        ld_res = _ld_arm(inst, params, diag)
        result, diag.arm = ld_res, MODE_LD
        if lp_res is not None and better(lp_res, ld_res):
            result, diag.arm = lp_res, MODE_LP
    else:
        raise ValueError(f"unknown mode {mode!r}")
    diag.objective, diag.feasible, diag.unmet = result.objective, result.feasible, result.unmet
    return result, diag
