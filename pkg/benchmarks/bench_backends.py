#!/usr/bin/env python3
"""Compare the compiled kernel lane against the pure-numpy lane.

Times the full streaming engine plus the three hot kernels in isolation.
Run after an editable install:

    python3 benchmarks/bench_backends.py [--seconds 5]
"""

import argparse
import time

import numpy as np
from threadpoolctl import threadpool_limits

from avtse import engine, kernels
from avtse.weights import init_random


def time_kernel(fn, *args, repeats=2000):
    fn(*args)  # warmup
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats * 1e6  # us


def kernel_micro(rng):
    x = rng.standard_normal((21, 64)).astype(np.float32)
    h = rng.standard_normal((21, 64)).astype(np.float32)
    c = rng.standard_normal((21, 64)).astype(np.float32)
    lw = kernels.LstmWeights(
        w_ih=rng.standard_normal((256, 64)).astype(np.float32),
        w_hh=rng.standard_normal((256, 64)).astype(np.float32),
        b=rng.standard_normal(256).astype(np.float32))
    q = rng.standard_normal((21, 64)).astype(np.float32)
    kc = rng.standard_normal((21, 50, 64)).astype(np.float32)
    vc = rng.standard_normal((21, 50, 64)).astype(np.float32)
    g = np.ones(64, dtype=np.float32)
    b = np.zeros(64, dtype=np.float32)
    return {
        "lstm_step (21x64)": lambda: kernels.lstm_step(x, h, c, lw),
        "attention_step (21x50x64)": lambda: kernels.attention_step(q, kc, vc, 4),
        "layer_norm (21x64)": lambda: kernels.layer_norm(x, g, b),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seconds", type=float, default=5.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ws = init_random(args.seed)
    rng = np.random.default_rng(args.seed)
    lanes = kernels.available_backends()
    if "compiled" not in lanes:
        print("compiled lane not built; benchmarking the python lane only")

    results = {}
    with threadpool_limits(limits=1, user_api="blas"):
        for lane in lanes:
            kernels.set_backend(lane)
            micro = {name: time_kernel(fn) for name, fn in kernel_micro(rng).items()}
            stats = engine.bench(ws, seconds=args.seconds, seed=args.seed)
            results[lane] = (micro, stats)
    kernels.set_backend("auto")

    names = list(next(iter(results.values()))[0])
    print(f"\n{'kernel':<28}" + "".join(f"{lane:>14}" for lane in lanes))
    for name in names:
        row = f"{name:<28}"
        for lane in lanes:
            row += f"{results[lane][0][name]:>12.1f}us"
        print(row)
    print(f"\n{'engine (per 10 ms frame)':<28}"
          + "".join(f"{results[lane][1].mean_ms:>12.3f}ms" for lane in lanes))
    print(f"{'real-time factor':<28}"
          + "".join(f"{results[lane][1].rtf:>14.3f}" for lane in lanes))
    if len(lanes) == 2:
        py, cy = results["python"][1].mean_ms, results["compiled"][1].mean_ms
        print(f"\ncompiled lane speedup on the frame loop: {py / cy:.2f}x")


if __name__ == "__main__":
    main()
