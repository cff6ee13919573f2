"""LP relaxation of the allocation problem and a two-phase bounded revised simplex."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .utility import LP, UtilityMatrix

log = logging.getLogger(__name__)

OPTIMAL = "OPTIMAL"
INFEASIBLE = "INFEASIBLE"
ITERATION_LIMIT = "ITERATION_LIMIT"

LE = "<="
GE = ">="

PIVOT_TOL = 1e-9


@dataclass
class LinearProgram:
    """maximize c.x  s.t.  rows (<= or >=),  lb <= x <= ub."""

    c: np.ndarray
    A: np.ndarray
    senses: list
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    columns: list = field(default_factory=list)
    row_names: list = field(default_factory=list)
    n_blocks: int = 0
    n_services: int = 0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.asarray(self.A, dtype=float).reshape(len(self.rhs), len(self.c))
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if not self.columns:
            self.columns = list(range(len(self.c)))
        if not self.row_names:
            self.row_names = [f"R{i}" for i in range(len(self.rhs))]

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    @property
    def n_cols(self) -> int:
        return len(self.c)

    def residuals(self, x) -> np.ndarray:
        """Per-row violation (positive = violated)."""
        ax = self.A @ x
        sign = np.array([1.0 if s == LE else -1.0 for s in self.senses])
        return sign * (ax - self.rhs)


@dataclass
class LPSolution:
    x: np.ndarray
    objective: float
    status: str
    columns: list
    reduced_costs: np.ndarray | None = None
    basic: np.ndarray | None = None
    at_upper: np.ndarray | None = None
    iterations: int = 0
    n_blocks: int = 0
    n_services: int = 0

    def value(self, key) -> float:
        return float(self.x[self.columns.index(key)])

    def as_dict(self) -> dict:
        return {key: float(v) for key, v in zip(self.columns, self.x)}


def build_lp(inst) -> LinearProgram:
    """Relaxation with one column per useful (block, service) pair.

    Latency columns with zero rate are dropped; they can neither raise the
    objective nor help a demand row.
    """
    latency = set(inst.latency_ids)
    cols = []
    for b in range(len(inst.blocks)):
        for k in range(len(inst.services)):
            if k in latency and inst.rates[b, k] <= 0:
                continue
            cols.append((b, k))
    n = len(cols)
    lat_ids = inst.latency_ids
    m = len(lat_ids) + inst.grid.n_units
    A = np.zeros((m, n))
    c = np.zeros(n)
    rhs = np.zeros(m)
    row_of = {k: r for r, k in enumerate(lat_ids)}
    for j, (b, k) in enumerate(cols):
        if k in latency:
            A[row_of[k], j] = inst.rates[b, k]
        else:
            c[j] = inst.rates[b, k]
        for i in inst.blocks[b].coverage:
            A[len(lat_ids) + i, j] = 1.0
    for k, r in row_of.items():
        rhs[r] = inst.services[k].demand_bits
    rhs[len(lat_ids):] = 1.0
    senses = [GE] * len(lat_ids) + [LE] * inst.grid.n_units
    names = [f"D{k}" for k in lat_ids] + [f"U{i}" for i in range(inst.grid.n_units)]
    return LinearProgram(c, A, senses, rhs, np.zeros(n), np.ones(n), cols, names,
                         len(inst.blocks), len(inst.services))


class _Revised:
    """Bounded primal simplex on max cost.y, M y = b, 0 <= y <= ub, with a dense basis inverse."""

    REFACTOR_EVERY = 100

    def __init__(self, M, b, basis, ub):
        self.M = M.tocsc()
        self.MT = M.T.tocsr()
        self.b = b
        self.m, self.N = M.shape
        self.basis = basis
        self.ub = ub
        self.at_upper = np.zeros(self.N, dtype=bool)
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[basis] = True
        self.Binv = np.eye(self.m)
        self.xB = b.copy()
        self.iterations = 0
        self._since_refactor = 0

    def column(self, j) -> np.ndarray:
        lo, hi = self.M.indptr[j], self.M.indptr[j + 1]
        return self.Binv[:, self.M.indices[lo:hi]] @ self.M.data[lo:hi]

    def refactor(self):
        B = self.M[:, self.basis].toarray()
        self.Binv = np.linalg.inv(B)
        y_n = np.where(self.at_upper & ~self.is_basic, self.ub, 0.0)
        y_n[~np.isfinite(y_n)] = 0.0
        self.xB = self.Binv @ (self.b - self.M @ y_n)
        self._since_refactor = 0

    def reduced_costs(self, cost) -> np.ndarray:
        y = cost[self.basis] @ self.Binv
        return cost - self.MT @ y

    def run(self, cost, tol, max_iters, allowed):
        """Iterate to optimality. Returns (status, reduced costs)."""
        degenerate = 0
        bland = False
        while True:
            if self._since_refactor >= self.REFACTOR_EVERY:
                self.refactor()
            d = self.reduced_costs(cost)
            if self.iterations >= max_iters:
                return ITERATION_LIMIT, d
            up = self.at_upper
            elig = allowed & ~self.is_basic & (((~up) & (d > tol)) | (up & (d < -tol)))
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return OPTIMAL, d
            j = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            direction = -1.0 if up[j] else 1.0
            col = self.column(j)
            alpha = direction * col
            ub_basic = self.ub[self.basis]
            ratios = np.full(self.m, np.inf)
            dec = alpha > PIVOT_TOL
            ratios[dec] = np.maximum(self.xB[dec], 0.0) / alpha[dec]
            inc = (alpha < -PIVOT_TOL) & np.isfinite(ub_basic)
            ratios[inc] = np.maximum(ub_basic[inc] - self.xB[inc], 0.0) / -alpha[inc]
            t_best, r = np.inf, -1
            if np.isfinite(ratios).any():
                t_best = ratios.min()
                ties = np.flatnonzero(ratios <= t_best + 1e-12)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
            self.iterations += 1
            t_flip = self.ub[j]
            if t_flip <= t_best:
                if not np.isfinite(t_flip):
                    raise RuntimeError("LP is unbounded")
                self.xB -= direction * t_flip * col
                self.at_upper[j] = not up[j]
                degenerate = 0
                bland = False
                continue
            start = self.ub[j] if up[j] else 0.0
            leaving = int(self.basis[r])
            self.xB -= direction * t_best * col
            self.xB[r] = start + direction * t_best
            prow = self.Binv[r] / col[r]
            self.Binv -= np.outer(col, prow)
            self.Binv[r] = prow
            self.basis[r] = j
            self.is_basic[j] = True
            self.is_basic[leaving] = False
            self.at_upper[leaving] = bool(alpha[r] < 0)
            self.at_upper[j] = False
            self._since_refactor += 1
            if t_best <= 1e-12:
                degenerate += 1
                # Bland's rule until the next nondegenerate step rules out cycling
                if degenerate > 50:
                    bland = True
            else:
                degenerate = 0
                bland = False

    def values(self) -> np.ndarray:
        y = np.where(self.at_upper, self.ub, 0.0)
        y[self.basis] = self.xB
        return y


def _simplex(lp: LinearProgram, tol: float, max_iters: int) -> LPSolution:
    m, n = lp.n_rows, lp.n_cols
    span = lp.ub - lp.lb
    if (span < -tol).any():
        return LPSolution(np.zeros(n), float("nan"), INFEASIBLE, lp.columns, n_blocks=lp.n_blocks,
                          n_services=lp.n_services)
    span = np.maximum(span, 0.0)
    A = lp.A.copy()
    scale = np.abs(A).max(axis=1)
    scale[scale == 0] = 1.0
    A /= scale[:, None]
    rhs = (lp.rhs - lp.A @ lp.lb) / scale
    cmax = np.abs(lp.c).max()
    cscale = cmax if cmax > 0 else 1.0
    c = lp.c / cscale

    is_le = np.array([s == LE for s in lp.senses], dtype=bool)
    slack_sign = np.where(is_le, 1.0, -1.0)
    # rows whose slack alone can absorb the residual start with the slack basic
    slack_ok = (is_le & (rhs >= 0)) | (~is_le & (rhs <= 0))
    art_rows = np.flatnonzero(~slack_ok)
    n_art = len(art_rows)
    flip = np.where(slack_ok, slack_sign, np.sign(rhs))
    flip[flip == 0] = 1.0
    M = sparse.hstack([
        sparse.csr_matrix(A * flip[:, None]),
        sparse.diags(slack_sign * flip),
        sparse.csr_matrix((np.ones(n_art), (art_rows, np.arange(n_art))), shape=(m, n_art)),
    ]).tocsc()
    b = rhs * flip
    basis = (n + np.arange(m)).astype(np.int64)
    basis[art_rows] = n + m + np.arange(n_art)
    N = n + m + n_art
    ub = np.concatenate([span, np.full(m, np.inf), np.full(n_art, np.inf)])
    rev = _Revised(M, b, basis, ub)
    allowed = np.ones(N, dtype=bool)

    def result(status, x=None, obj=float("nan"), **kw):
        return LPSolution(np.zeros(n) if x is None else x, obj, status, lp.columns, iterations=rev.iterations,
                          n_blocks=lp.n_blocks, n_services=lp.n_services, **kw)

    if n_art:
        cost1 = np.zeros(N)
        cost1[n + m:] = -1.0
        status, _ = rev.run(cost1, tol, max_iters, allowed)
        if status != OPTIMAL:
            return result(status)
        rev.refactor()
        if rev.values()[n + m:].sum() > 1e-7:
            return result(INFEASIBLE)
        # artificials stay at zero from here on
        rev.ub[n + m:] = 0.0
        allowed[n + m:] = False
        rev.xB[rev.basis >= n + m] = 0.0

    cost2 = np.zeros(N)
    cost2[:n] = c
    status, d = rev.run(cost2, tol, max_iters, allowed)
    rev.refactor()
    y = rev.values()
    x = np.clip(lp.lb + y[:n], lp.lb, lp.ub)
    return result(status, x, float(lp.c @ x), reduced_costs=d[:n] * cscale, basic=rev.is_basic[:n].copy(),
                  at_upper=rev.at_upper[:n].copy())


def _highs(lp: LinearProgram, tol: float) -> LPSolution:
    from scipy.optimize import linprog

    sign = np.array([1.0 if s == LE else -1.0 for s in lp.senses])
    res = linprog(-lp.c, A_ub=lp.A * sign[:, None] if lp.n_rows else None,
                  b_ub=lp.rhs * sign if lp.n_rows else None,
                  bounds=np.column_stack([lp.lb, lp.ub]) if lp.n_cols else None, method="highs-ds")
    meta = dict(n_blocks=lp.n_blocks, n_services=lp.n_services, iterations=int(getattr(res, "nit", 0)))
    if res.status == 2:
        return LPSolution(np.zeros(lp.n_cols), float("nan"), INFEASIBLE, lp.columns, **meta)
    if res.status == 1:
        return LPSolution(np.zeros(lp.n_cols), float("nan"), ITERATION_LIMIT, lp.columns, **meta)
    if res.status != 0:
        raise RuntimeError(f"HiGHS failed: {res.message}")
    x = np.clip(res.x, lp.lb, lp.ub)
    return LPSolution(x, float(lp.c @ x), OPTIMAL, lp.columns, **meta)


def solve_lp(lp: LinearProgram, tol: float = 1e-7, max_iters: int = 100_000, method: str = "simplex") -> LPSolution:
    """Solve ``lp``; ``method`` is ``"simplex"`` (built-in) or ``"highs"`` (scipy)."""
    if lp.n_cols == 0:
        viol = lp.residuals(np.zeros(0))
        status = OPTIMAL if (viol <= tol).all() else INFEASIBLE
        return LPSolution(np.zeros(0), 0.0 if status == OPTIMAL else float("nan"), status, lp.columns,
                          reduced_costs=np.zeros(0), basic=np.zeros(0, bool), at_upper=np.zeros(0, bool),
                          n_blocks=lp.n_blocks, n_services=lp.n_services)
    if method == "simplex":
        sol = _simplex(lp, min(tol, 1e-9), max_iters)
    elif method == "highs":
        sol = _highs(lp, tol)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    if sol.status == ITERATION_LIMIT:
        log.warning("LP hit the iteration limit (%d iterations)", sol.iterations)
    return sol


def lp_utility(sol: LPSolution) -> UtilityMatrix:
    """LP optimum reshaped to |B| x |K|; omitted columns score zero."""
    if sol.status != OPTIMAL:
        raise ValueError(f"LP utility needs an OPTIMAL solution, got {sol.status}")
    u = np.zeros((sol.n_blocks, sol.n_services))
    for (b, k), v in zip(sol.columns, sol.x):
        u[b, k] = max(float(v), 0.0)
    return UtilityMatrix(u, LP)


# -- fixed-format MPS ----------------------------------------------------

def _mps_line(*fields) -> str:
    # fixed MPS field starts: 2, 5, 15, 25, 40, 50
    out = " "
    widths = (3, 10, 10, 15, 10, 15)
    for f, w in zip(fields, widths):
        out += f"{f:<{w}}"
    return out.rstrip() + "\n"


def _num(v: float) -> str:
    s = f"{v:.12g}"
    return s if len(s) <= 12 else f"{v:.6e}"


def write_mps(lp: LinearProgram, path, name: str = "FLEXNUM") -> None:
    """Fixed-format MPS. MPS minimises, so the objective row holds -c."""
    rows = [f"R{i}" for i in range(lp.n_rows)]
    cols = [f"C{j}" for j in range(lp.n_cols)]
    lines = [f"NAME          {name}\n", "* maximisation: objective negated\n", "ROWS\n", _mps_line("N", "OBJ")]
    for r, s in zip(rows, lp.senses):
        lines.append(_mps_line("L" if s == LE else "G", r))
    lines.append("COLUMNS\n")
    for j, cname in enumerate(cols):
        entries = []
        if lp.c[j] != 0:
            entries.append(("OBJ", -lp.c[j]))
        entries += [(rows[i], lp.A[i, j]) for i in np.flatnonzero(lp.A[:, j])]
        for e in entries:
            lines.append(_mps_line("", cname, e[0], _num(e[1])))
    lines.append("RHS\n")
    for i in np.flatnonzero(lp.rhs):
        lines.append(_mps_line("", "RHS", rows[i], _num(lp.rhs[i])))
    lines.append("BOUNDS\n")
    for j, cname in enumerate(cols):
        if lp.lb[j] != 0:
            lines.append(_mps_line("LO", "BND", cname, _num(lp.lb[j])))
        if np.isfinite(lp.ub[j]):
            lines.append(_mps_line("UP", "BND", cname, _num(lp.ub[j])))
    lines.append("ENDATA\n")
    Path(path).write_text("".join(lines))


def read_mps(path) -> LinearProgram:
    """Read back what :func:`write_mps` produces (maximisation restored)."""
    section = None
    rows: list[str] = []
    senses: list[str] = []
    cols: dict[str, int] = {}
    entries: list[tuple[str, str, float]] = []
    rhs: dict[str, float] = {}
    lo: dict[str, float] = {}
    up: dict[str, float] = {}
    obj_row = None
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("*"):
            continue
        if not line.startswith(" "):
            section = line.split()[0]
            continue
        f = line.split()
        if section == "ROWS":
            if f[0] == "N":
                obj_row = f[1]
            else:
                rows.append(f[1])
                senses.append(LE if f[0] == "L" else GE)
        elif section == "COLUMNS":
            cols.setdefault(f[0], len(cols))
            for rname, val in zip(f[1::2], f[2::2]):
                entries.append((f[0], rname, float(val)))
        elif section == "RHS":
            for rname, val in zip(f[1::2], f[2::2]):
                rhs[rname] = float(val)
        elif section == "BOUNDS":
            (lo if f[0] == "LO" else up)[f[2]] = float(f[3])
    row_idx = {r: i for i, r in enumerate(rows)}
    n = len(cols)
    A = np.zeros((len(rows), n))
    c = np.zeros(n)
    for cname, rname, val in entries:
        if rname == obj_row:
            c[cols[cname]] = -val
        else:
            A[row_idx[rname], cols[cname]] = val
    names = sorted(cols, key=cols.get)
    return LinearProgram(
        c, A, senses, np.array([rhs.get(r, 0.0) for r in rows]),
        np.array([lo.get(cn, 0.0) for cn in names]), np.array([up.get(cn, np.inf) for cn in names]),
        list(range(n)), rows,
    )
