#!/usr/bin/env python3
"""Mean capacity-service rate of flexible vs fixed numerology across latency tolerances."""

import argparse
import logging

from flexnum import experiment as ex
from flexnum.instance import TABLE_LATENCIES_MS, SimulationConfig


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--demand-kbps", type=float, default=128.0)
    p.add_argument("--values", type=float, nargs="+", default=list(TABLE_LATENCIES_MS))
    p.add_argument("--time-limit", type=float, default=300.0)
    p.add_argument("--exact", action="store_true", help="also report the flexible optimum")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="results/fig2_tau.csv")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    modes = ("lp+ld",) + tuple(ex.FIXED_PREFIX + s for s in ex.FIXED_SHAPES)
    if args.exact:
        modes += (ex.MODE_EXACT,)
    spec = ex.SweepSpec(ex.SWEEP_TAU, tuple(args.values), args.seeds, modes, time_limit=args.time_limit,
                        config=SimulationConfig(demand_kbps=args.demand_kbps))
    rows = ex.run_sweep(spec, args.jobs, lambda v, s: logging.info("tau=%g seed=%d", v, s))
    ex.write_csv(rows, args.out)
    ex.write_metadata(spec, args.out)

    print(f"{'tau ms':>7} " + " ".join(f"{m.removeprefix(ex.FIXED_PREFIX):>14}" for m in modes))
    for t in spec.values:
        by_mode = {r["mode"]: r for r in rows if r["seed"] == ex.MEAN and r["value"] == t}
        print(f"{t:7g} " + " ".join(f"{by_mode[m]['rate_kbps']:8.0f} ({by_mode[m]['feasible']:.2f})" for m in modes))
    print("cells: mean kbps per capacity service (fraction of seeds meeting every latency demand)")


if __name__ == "__main__":
    main()
