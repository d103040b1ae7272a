"""Compare the numba kernels against the pure-numpy fallback.

Runs each hot kernel on both backends (each in a subprocess so the
``SUBSENSE_NO_NUMBA`` flag is exercised exactly as a user would set it) and
prints a timing table. Warmup calls are excluded so numba's one-time JIT
compilation does not count against the numba column.

Usage: python3 benchmarks/bench_kernels.py [--repeats 3]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

CASES = ("lv_qoi_batch_20k", "jacobi_eigh_batch_4096x6", "am_chain_lv_2000it")


def _time_best(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_worker(repeats: int) -> dict:
    from subsense import _kernels
    from subsense.calibration import adaptive_metropolis, make_task
    from subsense.models import get_model
    from subsense.sampling import RegionGrid, lhs

    lv = get_model("lotka-volterra")
    results = {"backend": _kernels.backend_name()}

    P = lhs(20_000, lv.space, seed=123)
    _kernels.lv_qoi_batch(P[:64])  # warmup / JIT
    results["lv_qoi_batch_20k"] = _time_best(
        lambda: _kernels.lv_qoi_batch(P), repeats
    )

    rng = np.random.default_rng(7)
    A = rng.standard_normal((4096, 6, 6))
    Cs = A @ np.transpose(A, (0, 2, 1))
    _kernels.jacobi_eigh_batch(Cs[:16])
    results["jacobi_eigh_batch_4096x6"] = _time_best(
        lambda: _kernels.jacobi_eigh_batch(Cs), repeats
    )

    grid = RegionGrid(lv.space, 4)
    task = make_task(grid.region_bounds(777), 777, k=3, ranking=[0, 2, 3, 1, 4, 5], seed=42)
    adaptive_metropolis(task, iterations=500, seed=42, burn_in=300)
    results["am_chain_lv_2000it"] = _time_best(
        lambda: adaptive_metropolis(task, iterations=2000, seed=42, burn_in=500),
        repeats,
    )
    return results


def run_backend(no_numba: bool, repeats: int) -> dict:
    env = dict(os.environ)
    env["SUBSENSE_NO_NUMBA"] = "1" if no_numba else "0"
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--worker", "--repeats", str(repeats)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(proc.stdout.splitlines()[-1])


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3, help="best-of-N timing")
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        print(json.dumps(run_worker(args.repeats)))
        return 0

    numba_res = run_backend(no_numba=False, repeats=args.repeats)
    numpy_res = run_backend(no_numba=True, repeats=args.repeats)
    if numba_res["backend"] != "numba":
        print("note: numba unavailable; both columns ran the numpy fallback")

    width = max(len(c) for c in CASES)
    print(f"{'kernel':<{width}}  {'numba [s]':>10}  {'numpy [s]':>10}  {'speedup':>8}")
    for case in CASES:
        tn, tp = numba_res[case], numpy_res[case]
        print(f"{case:<{width}}  {tn:>10.4f}  {tp:>10.4f}  {tp / tn:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
