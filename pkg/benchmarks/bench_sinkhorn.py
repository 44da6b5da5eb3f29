#!/usr/bin/env python3
"""Benchmark the Sinkhorn sweep kernels: compiled extension vs NumPy fallback.

Times the log-domain and plain paths on assignment-shaped instances (few
class rows, thousands of sample columns) plus the 19 x 4608 feasibility
instance. Run: python benchmarks/bench_sinkhorn.py [--repeats N]
"""

import argparse
import time

import numpy as np

from selflab._kernels import available_backends


def make_instance(c, n, seed, long_tailed):
    rng = np.random.default_rng(seed)
    scores = rng.normal(size=(c, n))
    if long_tailed:
        r = 0.72 ** np.arange(c)
        r /= r.sum()
    else:
        r = np.full(c, 1.0 / c)
    h = np.full(n, 1.0 / n)
    return scores, r, h


def bench_log(module, scores, r, h, eps, repeats):
    logk = np.ascontiguousarray(scores / eps)
    with np.errstate(divide="ignore"):
        log_r, log_h = np.log(r), np.log(h)
    best = np.inf
    iters = 0
    for _ in range(repeats):
        start = time.perf_counter()
        _, _, iters, err, conv = module.log_sinkhorn(logk, log_r, log_h, r, 1e-6, 1000)
        best = min(best, time.perf_counter() - start)
        assert conv, f"did not converge (err {err:.2e})"
    return best, iters


def bench_plain(module, scores, r, h, eps, repeats):
    k = np.ascontiguousarray(np.exp(scores / eps - (scores / eps).max()))
    best = np.inf
    iters = 0
    for _ in range(repeats):
        start = time.perf_counter()
        _, _, iters, err, conv = module.plain_sinkhorn(k, r, h, 1e-6, 1000)
        best = min(best, time.perf_counter() - start)
        assert conv, f"did not converge (err {err:.2e})"
    return best, iters


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}\n")
    cases = [
        ("5 x 4608  eps=0.05 long-tailed", 5, 4608, 0.05, True),
        ("19 x 4608 eps=0.05 long-tailed", 19, 4608, 0.05, True),
        ("19 x 4608 eps=0.05 uniform r", 19, 4608, 0.05, False),
        ("50 x 8192 eps=0.1  long-tailed", 50, 8192, 0.1, True),
    ]
    header = f"{'instance':34s} {'method':6s}" + "".join(
        f" {name:>12s}" for name in backends
    )
    print(header)
    print("-" * len(header))
    for label, c, n, eps, tailed in cases:
        scores, r, h = make_instance(c, n, seed=20734, long_tailed=tailed)
        for method, fn in (("log", bench_log), ("plain", bench_plain)):
            times = {}
            sweeps = 0
            for name, module in backends.items():
                elapsed, sweeps = fn(module, scores, r, h, eps, args.repeats)
                times[name] = elapsed
            row = f"{label:34s} {method:6s}" + "".join(
                f" {times[name]*1e3:9.1f} ms" for name in backends
            )
            print(row + f"   ({sweeps} sweeps)")


if __name__ == "__main__":
    main()
