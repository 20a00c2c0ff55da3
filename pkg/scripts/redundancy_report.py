"""Measure how much work AccMut saves over split-stream execution on a generated corpus.

Usage: python scripts/redundancy_report.py [--seed N] [--count N] [--equivalent-bias]

Prints per-program process/fork/instruction counts and the aggregate ratios.
These are measurements only; nothing here is asserted.
"""

import argparse
import time

from mutaccel import harness
from mutaccel.corpus import GenParams, generate_corpus
from mutaccel.mutgen import generate_mutants


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--count", type=int, default=10)
    ap.add_argument("--size", type=int, default=60)
    ap.add_argument("--equivalent-bias", action="store_true")
    args = ap.parse_args()

    cases = generate_corpus(args.seed, args.count, GenParams(size=args.size, equivalent_bias=args.equivalent_bias))
    metrics = {"standard": [], "sse": [], "accmut": []}
    print(f"{'program':10s} {'M':>5s} {'engine':>8s} {'procs':>7s} {'forks':>6s} {'instrs':>9s} {'secs':>7s}")
    for case in cases:
        p = case.program()
        t = generate_mutants(p)
        for engine in metrics:
            start = time.perf_counter()
            res = harness.run_suite(p, t, case.tests, engine)
            secs = time.perf_counter() - start
            rows = harness.parse_metrics(res.metrics_text())
            for r in rows:
                r["test"] = f"{case.name}/{r['test']}"
            metrics[engine].extend(rows)
            tot = {k: sum(r[k] for r in rows) for k in ("processes", "forks", "instructions")}
            print(f"{case.name:10s} {t.size:5d} {engine:>8s} {tot['processes']:7d} {tot['forks']:6d} "
                  f"{tot['instructions']:9d} {secs:7.2f}")
    report = harness.summarize(metrics)
    print()
    for k, v in report["aggregate"].items():
        print(f"{k:32s} {v:.4f}")


if __name__ == "__main__":
    main()
