#!/usr/bin/env python3
"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Each kernel is timed on identical inputs with both backends, and a small
multi-step propagation run is timed end to end under each backend (the
fallback is forced in a subprocess through SNNLAB_PURE_PYTHON=1).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from snnlab.kernels import RESET_SOFT, get_backend

PROPAGATION_SNIPPET = """
import time
from snnlab.core import LifParams
from snnlab.propagation import PropagationConfig, run_multi_step
from snnlab.kernels import BACKEND
cfg = PropagationConfig(depth=30, width=1000, T=20, lif=LifParams(0.5, 1.0, "soft"), seeds=2)
t0 = time.perf_counter()
run_multi_step(cfg)
print(BACKEND, time.perf_counter() - t0)
"""


def kernel_cases(n: int):
    gen = np.random.default_rng(0)
    u0 = gen.standard_normal(n)
    x0 = (gen.random(n) < 0.2).astype(np.float64)
    drive = gen.standard_normal(n)
    spikes = np.empty(n)
    moments_in = gen.standard_normal((20, n // 20))
    out = np.empty(n)

    def lif(mod):
        u = u0.copy()
        return lambda: mod.lif_update(u, x0, drive, 0.5, 1.0, RESET_SOFT, spikes)

    def moments(mod):
        return lambda: mod.column_moments(moments_in)

    def surrogate(mod):
        return lambda: mod.arctan_surrogate(u0, 1.0, 2.0, out)

    return {"lif_update": lif, "column_moments": moments, "arctan_surrogate": surrogate}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--size", type=int, default=20_000, help="elements per kernel call")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--skip-propagation", action="store_true")
    args = ap.parse_args(argv)

    try:
        backends = {"python": get_backend("python"), "cython": get_backend("cython")}
    except ImportError:
        print("compiled extension not built; only the fallback is available", file=sys.stderr)
        backends = {"python": get_backend("python")}

    print(f"{'kernel':<18}" + "".join(f"{b + ' (us)':>16}" for b in backends) + f"{'speedup':>10}")
    for name, make in kernel_cases(args.size).items():
        times = {}
        for b, mod in backends.items():
            fn = make(mod)
            times[b] = min(timeit.repeat(fn, number=10, repeat=args.repeat)) / 10 * 1e6
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<18}" + "".join(f"{times[b]:>16.1f}" for b in backends) + f"{speed:>9.2f}x")

    if not args.skip_propagation:
        print("\npropagation (depth 30, n=1000, T=20, 2 seeds):")
        for pure in ("0", "1"):
            env = {**os.environ, "SNNLAB_PURE_PYTHON": pure}
            res = subprocess.run([sys.executable, "-c", PROPAGATION_SNIPPET], env=env, capture_output=True, text=True)
            backend, seconds = res.stdout.split()
            print(f"  {backend:<8} {float(seconds):.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
