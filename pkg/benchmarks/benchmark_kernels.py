"""Compare the compiled flow kernel against the pure-Python fallback.

Times the two backends on identical workloads (flow + sensitivity
integration, plain rollouts) and checks they agree to machine precision.

Run:  python benchmarks/benchmark_kernels.py [--repeats 50]
"""

import argparse
import importlib
import math
import time

import numpy as np

from safeteleop._core import _flowpy

try:
    from safeteleop._core import _flowkernel
except ImportError:
    _flowkernel = None


def workload_states(n, seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for _ in range(n):
        ang = rng.uniform(0, 2 * math.pi)
        r = rng.uniform(1.0, 3.5)
        out.append(
            np.array([r * math.cos(ang), r * math.sin(ang), rng.uniform(-math.pi, math.pi)])
        )
    return out


def bench(mod, states, obs, par, repeats):
    t0 = time.perf_counter()
    last = None
    for rep in range(repeats):
        for i, x0 in enumerate(states):
            last = mod.flow_with_sensitivity(x0, i % 3, obs, par, 2.0, 20, 0.01)
    dt = time.perf_counter() - t0
    return dt / (repeats * len(states)), last


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--cases", type=int, default=50)
    args = ap.parse_args()

    obs = np.array([0.0, 0.0, 0.5, 0.0, 0.0])
    par = np.array([0.5, 1.0, 0.1])
    states = workload_states(args.cases)

    t_py, out_py = bench(_flowpy, states, obs, par, max(1, args.repeats // 10))
    print(f"pure python : {t_py * 1e3:8.3f} ms per flow (T=2.0, n_tau=20, dt=0.01)")

    if _flowkernel is None:
        print("compiled kernel not available; skipping comparison")
        return

    t_cy, out_cy = bench(_flowkernel, states, obs, par, args.repeats)
    print(f"compiled    : {t_cy * 1e3:8.3f} ms per flow")
    print(f"speedup     : {t_py / t_cy:8.1f}x")

    # agreement on the final workload case
    for a, b, name in [
        (out_py[1], out_cy[1], "states"),
        (out_py[2], out_cy[2], "sensitivities"),
    ]:
        err = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        print(f"max |Δ| {name}: {err:.3e}")
        assert err < 1e-12, f"backends disagree on {name}"


if __name__ == "__main__":
    main()
