"""Amari-index benchmark on the two simulation recipes.

Usage: python scripts/run_benchmark.py [--reps 40] [--seed 0] [--out results/]
"""

import argparse
import json
import time
import warnings
from pathlib import Path

from envsep.metrics import METHODS, run_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--blocks", type=int, default=20)
    ap.add_argument("--order", type=int, default=4)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    results = {}
    for recipe in ("sim1", "sim2"):
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            summaries = run_benchmark(recipe, METHODS, args.reps, args.seed, M=args.blocks,
                                      L=args.order, workers=args.workers)
        print(f"{recipe} ({args.reps} replications, {time.perf_counter() - t0:.0f} s)")
        for s in summaries:
            q1, q3 = s.quartiles
            print(f"  {s.method:7s} median {s.median:.4f}  IQR [{q1:.4f}, {q3:.4f}]"
                  f"  failures {len(s.failures)}")
        results[recipe] = [s.to_dict(with_runtimes=True) for s in summaries]

    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "benchmark.json").write_text(json.dumps(results, indent=2) + "\n")


if __name__ == "__main__":
    main()
