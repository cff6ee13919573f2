"""Lagrangian dual of the non-overlap constraints, solved by subgradient descent.

Pricing every basic unit with a multiplier splits the problem into an
independent per-block choice for the capacity services and one covering
knapsack per latency service.  The accumulated subproblem solutions form the
LD utility used by the greedy assignment.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .utility import LD, UtilityMatrix

STOP_TOL = 1e-9
_MAX_REFINE = 2
_MAX_DP_CELLS = 20_000_000


@dataclass
class KnapsackResult:
    blocks: tuple[int, ...]
    cost: float
    rate: float
    optimal: bool
    lower_bound: float
    covered: bool = True


@dataclass
class DualState:
    lam: np.ndarray
    h: int = 0
    g_best: float = math.inf
    lam_best: np.ndarray | None = None
    g_history: list = field(default_factory=list)
    u_acc: np.ndarray | None = None
    theta0: float = 0.0
    uncoverable: tuple[int, ...] = ()

    @property
    def infeasible(self) -> bool:
        return bool(self.uncoverable)


def alpha(lam: np.ndarray, b) -> float:
    """Price of block ``b``: sum of its units' multipliers."""
    return float(np.sum(lam[list(b.coverage)]))


def block_prices(inst, lam: np.ndarray) -> np.ndarray:
    return np.asarray(inst.a @ lam).ravel()


def solve_p2(inst, lam: np.ndarray, prices: np.ndarray | None = None):
    """Best capacity service per block when its margin over the price is positive.

    Returns ``(pairs, value)``.
    """
    cap = inst.capacity_ids
    if not cap or not inst.blocks:
        return [], 0.0
    prices = block_prices(inst, lam) if prices is None else prices
    margins = inst.rates[:, cap] - prices[:, None]
    best = np.argmax(margins, axis=1)
    top = margins[np.arange(len(best)), best]
    chosen = np.flatnonzero(top > 0)
    pairs = [(int(b), cap[best[b]]) for b in chosen]
    return pairs, float(top[chosen].sum())


def _cover_dp(costs, weights, Q, want_set):
    """min sum(cost) s.t. sum(weight) >= Q over 0/1 picks; integer weights."""
    dp = np.full(Q + 1, np.inf)
    dp[0] = 0.0
    take = np.zeros((len(costs), Q + 1), dtype=bool) if want_set else None
    cand = np.empty(Q + 1)
    for idx in range(len(costs)):
        w = int(weights[idx])
        if w <= 0:
            continue
        w = min(w, Q)
        c = costs[idx]
        cand[: w + 1] = dp[0] + c
        cand[w + 1 :] = dp[1 : Q + 1 - w] + c
        better = cand < dp
        if better.any():
            dp = np.where(better, cand, dp)
            if want_set:
                take[idx] = better
    if not want_set:
        return dp[Q], None
    if not np.isfinite(dp[Q]):
        return np.inf, None
    chosen = []
    j = Q
    for idx in range(len(costs) - 1, -1, -1):
        if j > 0 and take[idx, j]:
            chosen.append(idx)
            j = max(0, j - min(int(weights[idx]), Q))
    return dp[Q], sorted(chosen)


def _fractional_bound(costs, rates, demand):
    """LP relaxation of the covering knapsack: cheapest cost per bit first."""
    order = np.lexsort((-rates, costs / rates))
    need, total = demand, 0.0
    for i in order:
        if need <= 0:
            break
        take = min(1.0, need / rates[i])
        total += take * costs[i]
        need -= take * rates[i]
    return total


def min_cost_cover(costs, rates, demand: float, delta: float | None = None) -> KnapsackResult:
    """Exact covering knapsack on rates floored to multiples of ``delta``.

    The floored solution is always feasible for the true rates.  Its cost is
    bracketed by a ceiling-rounded relaxation; when the two disagree the
    grid is refined tenfold (at most twice).  ``lower_bound`` is a valid
    bound on the true optimum either way.
    """
    costs = np.asarray(costs, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if (costs < 0).any():
        raise ValueError("covering knapsack costs must be nonnegative")
    if demand <= 0:
        return KnapsackResult((), 0.0, 0.0, True, 0.0)
    items = np.flatnonzero(rates > 0)
    c, r = costs[items], rates[items]
    if r.sum() < demand - 1e-9 * max(1.0, demand):
        return KnapsackResult((), math.inf, 0.0, False, math.inf, covered=False)
    delta = max(1.0, demand / 10_000) if delta is None else float(delta)
    tol = 1e-9
    free = c <= 0
    if r[free].sum() >= demand:
        # zero-cost items alone cover; take the fewest, largest first
        idx = np.flatnonzero(free)[np.argsort(-r[free], kind="stable")]
        n = int(np.searchsorted(np.cumsum(r[idx]), demand - 1e-9 * max(1.0, demand))) + 1
        pick = sorted(items[idx[:n]].tolist())
        return KnapsackResult(tuple(pick), 0.0, float(rates[pick].sum()), True, 0.0)
    best_set, best_cost, lower = None, math.inf, 0.0
    for attempt in range(_MAX_REFINE + 1):
        Q = int(math.ceil(demand / delta - 1e-12))
        if attempt and Q * len(c) > _MAX_DP_CELLS:
            break
        cost_f, chosen = _cover_dp(c, np.floor(r / delta), Q, True)
        if chosen is not None and cost_f < best_cost:
            best_cost, best_set = cost_f, chosen
        lb = _fractional_bound(c, r, demand)
        if best_cost - lb > tol * max(1.0, abs(best_cost)):
            lb, _ = _cover_dp(c, np.ceil(r / delta), Q, False)
        lower = max(lower, lb)
        if best_set is not None and best_cost - lower <= tol * max(1.0, abs(best_cost)):
            break
        delta /= 10.0
    if best_set is None:
        # rounding lost the cover; fall back to all items pruned greedily
        keep = list(np.argsort(-c, kind="stable"))
        chosen_mask = np.ones(len(c), dtype=bool)
        total = r.sum()
        for i in keep:
            if total - r[i] >= demand:
                chosen_mask[i] = False
                total -= r[i]
        best_set = list(np.flatnonzero(chosen_mask))
        best_cost = float(c[best_set].sum())
    blocks = tuple(int(items[i]) for i in best_set)
    optimal = best_cost - lower <= tol * max(1.0, abs(best_cost))
    return KnapsackResult(blocks, float(best_cost), float(r[best_set].sum()), bool(optimal),
                          float(min(lower, best_cost)))


def solve_p3k(inst, lam: np.ndarray, k: int, delta: float | None = None, prices=None) -> KnapsackResult:
    """Cheapest block set (at current prices) meeting latency service ``k``'s demand."""
    svc = inst.services[k]
    if not svc.is_latency:
        raise ValueError(f"service {k} is not a latency service")
    if delta is not None and delta <= 0:
        raise ValueError("granularity must be positive")
    prices = block_prices(inst, lam) if prices is None else prices
    return min_cost_cover(prices, inst.rates[:, k], svc.demand_bits, delta)


def dual_value(inst, lam: np.ndarray, p2_value: float, p3_costs) -> float:
    """g(lambda) = sum(lambda) + P2 value - sum of P3[k] costs (+inf if any service cannot be covered)."""
    p3 = list(p3_costs)
    if any(not math.isfinite(x) for x in p3):
        return math.inf
    return float(np.sum(lam)) + p2_value - float(sum(p3))


def default_theta0(inst) -> float:
    if not inst.blocks or inst.rates.size == 0:
        return 0.0
    return float(inst.rates.max()) / max(len(b.coverage) for b in inst.blocks)


def subgradient_run(inst, max_iters: int = 200, theta0: float | None = None, trace=None) -> DualState:
    """Diminishing-step subgradient descent on the dual; lambda starts at zero.

    ``trace`` may be a writable text stream; one CSV row per iteration is
    written to it.
    """
    n_units = inst.grid.n_units
    nb, nk = inst.rates.shape
    state = DualState(lam=np.zeros(n_units), u_acc=np.zeros((nb, nk)))
    state.theta0 = default_theta0(inst) if theta0 is None else float(theta0)
    latency = inst.latency_ids
    total_rate = inst.rates.sum(axis=0)
    state.uncoverable = tuple(
        k for k in latency if total_rate[k] < inst.services[k].demand_bits * (1 - 1e-9)
    )
    active = [k for k in latency if k not in state.uncoverable]
    writer = None
    if trace is not None:
        writer = csv.writer(trace, lineterminator="\n")
        writer.writerow(["h", "g", "s_inf", "assigned"])
    a = inst.a
    lam = state.lam
    for h in range(1, max_iters + 1):
        prices = np.asarray(a @ lam).ravel()
        pairs, p2 = solve_p2(inst, lam, prices)
        p3_lb = []
        for k in active:
            res = min_cost_cover(prices, inst.rates[:, k], inst.services[k].demand_bits)
            p3_lb.append(res.lower_bound)
            pairs.extend((b, k) for b in res.blocks)
        g = math.inf if state.uncoverable else dual_value(inst, lam, p2, p3_lb)
        state.g_history.append(g)
        if g < state.g_best or state.lam_best is None:
            state.g_best = g
            state.lam_best = lam.copy()
        mult = np.zeros(nb)
        for b, k in pairs:
            mult[b] += 1.0
            state.u_acc[b, k] += 1.0
        usage = np.asarray(a.T @ mult).ravel()
        s = 1.0 - usage
        state.h = h
        if writer is not None:
            writer.writerow([h, repr(g), repr(float(np.abs(s).max()) if n_units else 0.0), len(pairs)])
        step = state.theta0 / math.sqrt(h)
        new = np.maximum(0.0, lam - step * s)
        moved = float(np.abs(new - lam).max()) if n_units else 0.0
        lam = new
        state.lam = lam
        if moved < STOP_TOL:
            break
    return state


def ld_utility(state: DualState) -> UtilityMatrix:
    if state.h < 1:
        raise ValueError("no subgradient iteration has run")
    return UtilityMatrix(state.u_acc.copy(), LD)
