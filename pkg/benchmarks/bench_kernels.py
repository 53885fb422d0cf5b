"""Benchmark the jit-compiled kernels against the pure-Python fallback.

The fallback column is measured in a subprocess running with ``APS_NUMBA=0``,
so the whole call tree (not just the outermost function) uses the uncompiled
path. Running the script with numba disabled prints a single-column table.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
import time

import numpy as np

from aps import _kernels as k
from aps.simulator import make_tapes

SEC5_P = np.array([[0.99, 0.01], [0.7, 0.3]])


def _time(fn, repeat: int, number: int) -> float:
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        best = min(best, (time.perf_counter() - t0) / number)
    return best


def _run_suite(scale: float) -> dict[str, float]:
    n = max(1, int(50_000 * scale))
    reps = max(2, int(50 * scale))

    lo = np.array([0.1, 0.2, 0.05, 0.0])
    hi = np.array([0.5, 0.6, 0.3, 0.4])
    qbuf = np.zeros(4)

    budget = 500
    p_all = np.broadcast_to(SEC5_P, (reps, 2, 2)).copy()
    tapes = make_tapes(p_all, budget, seed=1)
    cps = np.array([budget], dtype=np.int64)
    delta = (1.0 / budget) * budget ** -2.5
    log_term = 1.0 + math.log(budget)

    def run_mc(r):
        mse = np.zeros((r, 1, 2))
        t = np.zeros((r, 1, 2), dtype=np.int64)
        u = np.zeros((r, 1, 2))
        ev = np.zeros(r, dtype=np.uint8)
        emp = np.zeros(r, dtype=np.int64)
        k.mc_runs(k.MODE_BAYES, p_all[:r], np.ones((2, 2)), delta, log_term,
                  tapes[:r], cps, np.zeros((r, 2)), mse, t, u, ev, emp)

    # Warm the JIT (no-ops on the fallback path).
    k.betainc(2.0, 3.0, 0.5)
    k.beta_quantile(0.3, 2.0, 3.0)
    k.simplex_var_max(lo, hi, qbuf)
    run_mc(2)

    return {
        "betainc (a,b ~ 1e3)": _time(
            lambda: k.betainc(811.0, 1613.0, 0.31), repeat=3, number=n),
        "beta_quantile mid": _time(
            lambda: k.beta_quantile(0.31, 27.0, 13.0), repeat=3, number=n),
        "beta_quantile tail 1e-15": _time(
            lambda: k.beta_quantile(1e-15, 811.0, 1613.0), repeat=3,
            number=max(1, n // 2)),
        "simplex_var_max L=4": _time(
            lambda: k.simplex_var_max(lo, hi, qbuf), repeat=3, number=n),
        "bayes trajectory N=500 (per run)": _time(
            lambda: run_mc(reps), repeat=2, number=1) / reps,
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true",
                        help="smaller iteration counts")
    parser.add_argument("--raw", action="store_true",
                        help="emit this path's timings as JSON (internal)")
    args = parser.parse_args()
    scale = 0.02 if args.quick else 1.0
    if args.raw:
        # Subprocess mode: the fallback run scales its work down further
        # because the interpreted path is orders of magnitude slower.
        print(json.dumps(_run_suite(scale * 0.02)))
        return

    mine = _run_suite(scale)
    if not k.NUMBA_ENABLED:
        print("kernel path: fallback (numba disabled); single-column run\n")
        print(f"{'benchmark':<36} {'python':>12}")
        for name, sec in mine.items():
            print(f"{name:<36} {sec * 1e6:>10.2f}us")
        return

    env = dict(os.environ, APS_NUMBA="0")
    cmd = [sys.executable, os.path.abspath(__file__), "--raw"]
    if args.quick:
        cmd.append("--quick")
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"fallback benchmark failed:\n{proc.stderr}")
    fallback = json.loads(proc.stdout.strip().splitlines()[-1])

    print("kernel path: numba vs pure-Python fallback (APS_NUMBA=0 subprocess)\n")
    print(f"{'benchmark':<36} {'jit':>12} {'python':>12} {'speedup':>9}")
    for name, jit_t in mine.items():
        py_t = fallback[name]
        print(f"{name:<36} {jit_t * 1e6:>10.2f}us {py_t * 1e6:>10.2f}us "
              f"{py_t / jit_t:>8.0f}x")


if __name__ == "__main__":
    main()
