"""Compare the compiled network kernel with the numpy fallback.

Run ``python benchmarks/bench_kernels.py``; pass ``--quick`` for a short run.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fuzzymarket import _backend
from fuzzymarket.network import EXTERNAL, GLOBAL, LOCAL, NetworkParams, step_arrays

FULL_RUN = """
from fuzzymarket.montecarlo import GridPoint, preset_grid, run_cell
run_cell(preset_grid("table2"), GridPoint(0.85, 60, 0.05), runs={runs})
"""


def kernel_times(n, repeat, number):
    rng = np.random.default_rng(0)
    c, s = rng.uniform(5, 25, n), rng.uniform(0, 5, n)
    params = NetworkParams.uniform(n, 0.8, 0.1)
    rows = []
    for scheme, label in ((LOCAL, "local"), (GLOBAL, "global"), (EXTERNAL, "external")):
        for name, kernel in _backend.KERNELS.items():
            t = min(timeit.repeat(lambda: step_arrays(c, s, params, scheme, 12.0, kernel=kernel), repeat=repeat, number=number))
            rows.append((label, name, n, t / number * 1e6))
    return rows


def simulation_time(pure, runs):
    env = dict(os.environ, FUZZYMARKET_PURE="1" if pure else "0")
    code = f"import timeit; print(min(timeit.repeat({FULL_RUN.format(runs=runs)!r}, repeat=3, number=1)))"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    sizes = (60,) if args.quick else (20, 60, 200, 1000)
    number = 50 if args.quick else 200
    print(f"selected backend: {_backend.BACKEND}")
    print(f"{'scheme':<9} {'kernel':<7} {'n':>5} {'us/step':>10}")
    for n in sizes:
        for label, name, size, us in kernel_times(n, 3, number):
            print(f"{label:<9} {name:<7} {size:>5} {us:>10.1f}")
    if "cython" not in _backend.KERNELS:
        print("compiled kernel not built; skipping end-to-end comparison")
        return
    runs = 5 if args.quick else 50
    fast, slow = simulation_time(False, runs), simulation_time(True, runs)
    print(f"end-to-end Monte Carlo cell ({runs} runs): cython {fast:.3f}s, python {slow:.3f}s, speedup {slow / fast:.1f}x")


if __name__ == "__main__":
    main()
