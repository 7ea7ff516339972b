"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--paths N] [--repeat R]

Prints per-kernel best-of-R timings and an end-to-end segmented solve of the
paper-example generator under each backend (the second in a subprocess with
ABSDE_LAB_PURE_PYTHON=1).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from absde_lab import kernels

E2E = """
import time
from absde_lab.kernels import BACKEND
from absde_lab.presets import load_preset
from absde_lab import experiments as ex
cfg = load_preset("paper-example").override(n_paths={paths})
t = time.perf_counter()
ex.solve_pair(cfg)
print(BACKEND, time.perf_counter() - t)
"""


def bench_kernels(n, repeat):
    rng = np.random.default_rng(0)
    X = np.ascontiguousarray(rng.normal(size=(n, 4)))
    V = np.ascontiguousarray(rng.normal(size=(n, 2)))
    beta = rng.normal(size=(4, 2))
    a = rng.normal(size=n * 10)
    cases = {
        "gram": lambda m: m.gram(X, V),
        "apply_coefficients": lambda m: m.apply_coefficients(X, beta),
        "backward_running_min": lambda m: m.backward_running_min(a),
    }
    backends = kernels.backends()
    print(f"{'kernel':<22}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    for label, fn in cases.items():
        times = {name: min(timeit.repeat(lambda: fn(m), number=20, repeat=repeat)) / 20 for name, m in backends.items()}
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<22}" + "".join(f"{times[k] * 1e6:>12.1f}us" for k in backends) + f"{speed:>9.2f}x")


def bench_end_to_end(paths):
    code = E2E.format(paths=paths)
    for pure in ("0", "1"):
        env = dict(os.environ, ABSDE_LAB_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"end-to-end paper example ({paths} paths), {backend:<7}: {float(secs):.3f}s")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    bench_kernels(args.paths, args.repeat)
    bench_end_to_end(args.paths)


if __name__ == "__main__":
    main()
