#!/usr/bin/env python3
"""Wall time of BA against |B||K| log(|B||K|) on square grids."""

import argparse
import math
import time

import numpy as np

from flexnum.assign import ba, rate_utility
from flexnum.grid import CATALOG, ResourceGrid
from flexnum.instance import CAPACITY, LATENCY, Service, build_instance


def instance(n: int):
    services = [Service(k, LATENCY, snr_db=5.0 + 5 * k, demand_bits=256.0, latency_ms=n * 0.0625)
                for k in range(5)]
    services += [Service(5 + k, CAPACITY, snr_db=5.0 + 5 * k) for k in range(5)]
    return build_instance(ResourceGrid.of_size(n, n), list(CATALOG.values()), services, seed=n)


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sizes", type=int, nargs="+", default=[8, 12, 16, 24, 32])
    p.add_argument("--repeats", type=int, default=7)
    args = p.parse_args()

    pred, times = [], []
    for n in args.sizes:
        inst = instance(n)
        u = rate_utility(inst)
        ba(inst, None, u)
        t = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            ba(inst, None, u)
            t.append(time.perf_counter() - t0)
        m = len(inst.blocks) * len(inst.services)
        pred.append(m * math.log(m))
        times.append(float(np.median(t)))
        print(f"{n:3d}x{n:<3d} |B|={len(inst.blocks):5d} |B||K|log={pred[-1]:10.0f} t={times[-1] * 1e3:8.2f} ms")
    slope = np.polyfit(np.log(pred), np.log(times), 1)[0]
    print(f"log-log slope vs |B||K|log(|B||K|): {slope:.3f}")


if __name__ == "__main__":
    main()
