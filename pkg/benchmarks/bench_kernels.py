"""Per-step cost of the SGD kernels, compiled vs pure Python.

    python3 benchmarks/bench_kernels.py [--steps N]
"""
import argparse
import time

import numpy as np

from odyn import kernels
from odyn.activations import Activation
from odyn.overlaps import overlaps_of


def _time(fn, reps=3):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(p, k, d, steps, backend, act):
    rng = np.random.default_rng(0)
    W, Wt = 0.5 * rng.standard_normal((p, d)), rng.standard_normal((k, d))
    X, z = rng.standard_normal((steps, d)) / np.sqrt(d), 0.01 * rng.standard_normal(steps)
    st = overlaps_of(W, Wt)
    G = rng.standard_normal((steps, p + k))
    chi = rng.chisquare(max(d - p - k, 1), steps)

    def weight():
        kernels.weight_steps(W.copy(), Wt, X, z, 0.05, 0.0, act, act, backend=backend)

    def overlap():
        Q, M = np.array(st.Q), np.array(st.M)
        kernels.overlap_steps(Q, M, st.P, G, chi, z, 0.05, 0.0, d, act, act, backend=backend)

    return _time(weight) / steps, _time(overlap) / steps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20_000)
    args = ap.parse_args()
    backends = ["python"] + (["compiled"] if kernels.compiled_available() else [])
    print(f"{'act':<8}{'p':>4}{'k':>3}{'d':>6}  {'backend':<9}{'weight us/step':>16}{'overlap us/step':>17}")
    for name in ("erf", "square"):
        act = Activation.from_name(name)
        for p, k, d in ((2, 1, 100), (10, 2, 500), (64, 4, 1000)):
            for backend in backends:
                n = args.steps if backend == "compiled" else max(200, args.steps // 50)
                w, o = bench(p, k, d, n, backend, act)
                print(f"{name:<8}{p:>4}{k:>3}{d:>6}  {backend:<9}{w * 1e6:>16.2f}{o * 1e6:>17.2f}")


if __name__ == "__main__":
    main()
