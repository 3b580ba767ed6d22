"""Time the compiled kernels against the NumPy/SciPy fallback and brute force.

    python3 benchmarks/bench_kernels.py [--repeat 7] [--json out.json]
"""
import argparse
import json
import sys
import time

import numpy as np

from articap import kernels
from articap.fields import field_bruteforce


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def brute_fps(points, k, start):
    sel = [start]
    d = np.linalg.norm(points - points[start], axis=1)
    d[start] = -1.0
    for _ in range(k - 1):
        i = int(np.argmax(d))
        sel.append(i)
        d = np.minimum(d, np.linalg.norm(points - points[i], axis=1))
        d[sel] = -1.0
    return sel


def run(repeat):
    rng = np.random.default_rng(0)
    rows = []
    cases = [("hand->object", 778, 4000), ("object->hand", 4000, 778), ("object->object", 4000, 4000),
             ("large", 20000, 20000)]
    for name, na, nb in cases:
        a = rng.normal(scale=0.03, size=(na, 3)) + [0.05, 0, 0]
        b = rng.normal(scale=0.06, size=(nb, 3))
        row = {"kernel": "field", "case": f"{name} ({na}x{nb})"}
        for backend in sorted(kernels.BACKENDS):
            row[backend] = best_of(lambda: kernels.nearest_distances(a, b, 0.1, backend=backend), repeat)
        row["brute"] = best_of(lambda: field_bruteforce(a, b, 0.1), max(1, repeat // 3)) if na * nb <= 2e7 else None
        rows.append(row)
    for n, k in ((4000, 16), (4000, 256), (20000, 64)):
        P = rng.normal(size=(n, 3))
        row = {"kernel": "fps", "case": f"{n} points, k={k}"}
        for backend in sorted(kernels.BACKENDS):
            row[backend] = best_of(lambda: kernels.farthest_point_sampling(P, k, 0, backend=backend), repeat)
        row["brute"] = best_of(lambda: brute_fps(P, k, 0), max(1, repeat // 3))
        rows.append(row)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--json", help="also write the raw timings here")
    args = ap.parse_args(argv)
    rows = run(args.repeat)
    cols = ["compiled", "python", "brute"]
    print(f"{'kernel':<7} {'case':<34}" + "".join(f"{c + ' [ms]':>16}" for c in cols))
    for r in rows:
        cells = "".join(f"{'-' if r.get(c) is None else f'{r[c] * 1e3:.2f}':>16}" for c in cols)
        print(f"{r['kernel']:<7} {r['case']:<34}{cells}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
