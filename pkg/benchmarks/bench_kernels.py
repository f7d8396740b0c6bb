"""Time the numba kernels against the numpy fallback.

The backend is fixed when trimcurve is imported, so each backend runs in its
own subprocess.  Usage::

    python benchmarks/bench_kernels.py [--n 2000] [--repeat 5]

Prints one line per (kernel, backend) with the best wall time and checks
that both backends return the same numbers.
"""
import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from trimcurve import kernels
from trimcurve._accel import BACKEND
from trimcurve.dgp import DGPSpec, generate_dataset, make_true_model
from trimcurve.nuisance import tabulate
from trimcurve.smoothing import KernelConfig, default_grid, kernel_weight_matrix

n, repeat = int(sys.argv[1]), int(sys.argv[2])
data = generate_dataset(DGPSpec(n=n), 0)
a_values = np.round(np.arange(21) * 0.05, 10)
grid = default_grid(0.0, 1.0, 0.1, epsilon=0.01)
table = tabulate(make_true_model(DGPSpec()), data, a_values, grid)
kw = kernel_weight_matrix(grid, a_values, KernelConfig(0.1))
t_grid = np.arange(101) * 0.005
x = data.x
cases = {
    "grid_integrals": lambda: kernels.grid_integrals(kw, table.pi_grid, table.mu_grid, 0.1, 0.01, True),
    "den_path_means": lambda: kernels.den_path_means(table.pi_grid, data.w, t_grid, 0.01),
    "nw_sums": lambda: kernels.nw_sums(x, x, np.column_stack([data.y, data.a]), data.w, np.array([0.05])),
}
out = {}
for name, fn in cases.items():
    first = fn()  # includes compilation for numba
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    flat = np.concatenate([np.ravel(v) for v in (first if isinstance(first, tuple) else (first,))])
    out[name] = {"seconds": best, "checksum": float(np.sum(flat)), "sample": flat[:: max(1, flat.size // 1000)].tolist()}
print(json.dumps({"backend": BACKEND, "cases": out}))
"""


def run_backend(backend, n, repeat):
    env = dict(os.environ, TRIMCURVE_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(n), str(repeat)], env=env, capture_output=True, text=True, check=True
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=2000, help="units in the benchmark dataset")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    t0 = time.perf_counter()
    results = {b: run_backend(b, args.n, args.repeat) for b in ("numba", "numpy")}
    print(f"n={args.n}, best of {args.repeat}")
    print(f"{'kernel':<16} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8}  max rel diff")
    for name in results["numba"]["cases"]:
        nb, npy = results["numba"]["cases"][name], results["numpy"]["cases"][name]
        a, b = nb["sample"], npy["sample"]
        rel = max((abs(x - y) / max(abs(x), abs(y), 1e-300) for x, y in zip(a, b)), default=0.0)
        print(f"{name:<16} {nb['seconds']:>10.4f} {npy['seconds']:>10.4f} {npy['seconds'] / nb['seconds']:>8.2f}  {rel:.2e}")
    print(f"total wall time {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
