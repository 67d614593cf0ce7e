"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats 5] [--csv out.csv]
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from dynregime.kernels import backends
from dynregime.selection import legal_masks


def best_time(fn, repeats):
    fn()  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    terms = rng.standard_normal((16384, 8)) * 10.0 ** rng.uniform(-3, 3, (16384, 8))
    masks = legal_masks(8)[rng.integers(0, 247, 16384)]
    yield "row_scores N=16384 D=8", lambda b: (lambda: b.row_scores(terms, masks))

    small = terms[:2048, :6]
    w = np.ones(small.shape[0])
    all6 = legal_masks(6)
    yield "mask_objectives N=2048 D=6 (57 masks)", lambda b: (lambda: b.mask_objectives(small, w, all6))

    n, c, f = rng.random((3, 256, 256))
    yield "n_flux_divergence 256x256", lambda b: (
        lambda: b.n_flux_divergence(n, c, f, 1 / 256, 3.5e-4, 0.38, 0.6, 0.34, True)
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--csv", help="also write results here")
    args = ap.parse_args(argv)

    impls = backends()
    if "compiled" not in impls:
        print("compiled extension not built; only the numpy backend is available", file=sys.stderr)
    rows = []
    for name, make in cases(np.random.default_rng(0)):
        timing = {b: best_time(make(mod), args.repeats) for b, mod in impls.items()}
        speedup = timing["python"] / timing["compiled"] if "compiled" in timing else float("nan")
        rows.append({"kernel": name, **{f"{b}_s": t for b, t in timing.items()}, "speedup": speedup})
        parts = "  ".join(f"{b}={t * 1e3:8.2f} ms" for b, t in timing.items())
        print(f"{name:40s} {parts}  speedup x{speedup:.1f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)


if __name__ == "__main__":
    main()
