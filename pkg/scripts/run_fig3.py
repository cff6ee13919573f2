#!/usr/bin/env python3
"""Optimality gap of the utility variants against the exact optimum over the demand sweep."""

import argparse
import logging
import math

import numpy as np

from flexnum import experiment as ex
from flexnum.instance import TABLE_DEMANDS_KBPS


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--values", type=float, nargs="+", default=list(TABLE_DEMANDS_KBPS))
    p.add_argument("--time-limit", type=float, default=300.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="results/fig3_demand.csv")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    spec = ex.SweepSpec(ex.SWEEP_DEMAND, tuple(args.values), args.seeds, ("rate", "lp", "ld", "lp+ld"),
                        with_exact=True, time_limit=args.time_limit)
    rows = ex.run_sweep(spec, args.jobs, lambda v, s: logging.info("q=%g seed=%d", v, s))
    ex.write_csv(rows, args.out)
    ex.write_metadata(spec, args.out)

    print(f"{'q kbps':>7} " + " ".join(f"{m:>8}" for m in spec.modes) + "   n")
    for q in spec.values:
        means = [r for r in rows if r["seed"] == ex.MEAN and r["value"] == q]
        by_mode = {r["mode"]: r for r in means}
        cells = [by_mode[m]["gap"] for m in spec.modes]
        print(f"{q:7g} " + " ".join(f"{c:8.3f}" if c is not None else f"{'-':>8}" for c in cells)
              + f"  {by_mode['lp+ld']['n_gap']:2d}")
    feas = [r for r in rows if r["seed"] != ex.MEAN and r["mode"] == "lp+ld" and r.get("exact_status")]
    statuses = {s: sum(r["exact_status"] == s for r in feas) for s in ("optimal", "infeasible", "timeout")}
    print("exact:", statuses)
    gaps = [np.nanmean([r["gap"] for r in rows if r["seed"] != ex.MEAN and r["value"] == q
                        and r["mode"] == "lp+ld" and r.get("gap") is not None] or [math.nan]) for q in spec.values]
    print("LP+LD mean gap by q:", np.round(gaps, 3))


if __name__ == "__main__":
    main()
