"""Time the numba and numpy backends of the hot kernels.

    python3 benchmarks/bench_kernels.py [--trials 20000] [--repeat 3]

Compilation is excluded: each kernel is warmed up once before timing.
"""
import argparse
import time

import numpy as np

from acksched._accel import HAVE_NUMBA
from acksched.channel import SystemConfig, channel_trajectory
from acksched.kernels import run_proposed_batch
from acksched.oracle import OracleConfig, dp_optimal
from acksched.phi import build_phi


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]

    cfg = SystemConfig(total_power=3e4)
    phi = build_phi(cfg.subbands)
    h = channel_trajectory(cfg, np.random.default_rng(0), args.trials)
    ocfg = OracleConfig(horizon=4, theta_grid=16)
    phi1 = build_phi(1)

    cases = [
        (f"proposed slot loop ({args.trials} trials, K=3, M=30)",
         lambda be: run_proposed_batch(cfg, phi, h, backend=be)),
        ("DP oracle (M=4, G=16)", lambda be: dp_optimal(ocfg, phi1, backend=be)),
    ]
    print(f"{'kernel':48s} " + " ".join(f"{b:>10s}" for b in backends) + "   speedup")
    for name, fn in cases:
        row = []
        for be in backends:
            fn(be)  # warm-up / JIT
            row.append(best_of(lambda: fn(be), args.repeat))
        speed = f"{row[1] / row[0]:8.1f}x" if len(row) == 2 else ""
        print(f"{name:48s} " + " ".join(f"{t:9.3f}s" for t in row) + f"  {speed}")


if __name__ == "__main__":
    main()
