"""Benchmark the hot kernels on the active backend.

Usage:
    python3 benchmarks/bench_kernels.py            # active backend only
    python3 benchmarks/bench_kernels.py --compare  # numba vs numpy table

--compare re-runs this script in a subprocess with TACPEG_DISABLE_NUMBA=1
and prints both columns side by side. Timings are best-of-5 medians over
enough iterations to fill ~0.2 s per kernel.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _bench(fn, *args, min_time=0.2, repeats=5):
    fn(*args)  # warm-up (JIT compile, cache load)
    n = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(n):
            fn(*args)
        dt = time.perf_counter() - t0
        if dt >= min_time / 4 or n >= 1 << 20:
            break
        n *= 4
    best = min(
        _timed(fn, args, n) for _ in range(repeats)
    )
    return best / n


def _timed(fn, args, n):
    t0 = time.perf_counter()
    for _ in range(n):
        fn(*args)
    return time.perf_counter() - t0


def run_suite():
    from tacpeg import kernels
    from tacpeg.geometry import PegShape, ClearanceSpec, PoseError, contact_state
    from tacpeg.tactile import ImprintParams, render_frame_set, compose_grid
    from tacpeg.policies import featurize

    rng = np.random.default_rng(0)
    results = {"backend": kernels.BACKEND, "timings_us": {}}

    px = rng.uniform(-20, 20, 5000)
    py = rng.uniform(-20, 20, 5000)
    nx = rng.standard_normal(8)
    ny = rng.standard_normal(8)
    norm = np.hypot(nx, ny)
    nx, ny = nx / norm, ny / norm
    rhs = rng.uniform(10, 15, 8)
    results["timings_us"]["max_violation_5000x8"] = 1e6 * _bench(
        kernels.max_violation, px, py, nx, ny, rhs)

    results["timings_us"]["gauss_ellipse_224"] = 1e6 * _bench(
        kernels.gauss_ellipse, 224, 224, 111.5, 111.5, 10.0, 70.0, 45.0, 0.5)

    frame = rng.random((224, 224))
    results["timings_us"]["bilinear_resize_224_to_205"] = 1e6 * _bench(
        kernels.bilinear_resize, frame, 205, 205)

    comp = rng.random((616, 616))
    results["timings_us"]["block_mean_616_to_28"] = 1e6 * _bench(
        kernels.block_mean, comp, 28, 28)

    contact = contact_state(PegShape("square", 25.0), ClearanceSpec(2.0),
                            PoseError(2.0, 1.0, 0.0))
    params = ImprintParams()
    results["timings_us"]["render_composite_full"] = 1e6 * _bench(
        lambda: compose_grid(render_frame_set(contact, params, seed=(0, 0, 1))))

    results["timings_us"]["featurize_616"] = 1e6 * _bench(featurize, comp)
    return results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--compare", action="store_true",
                    help="also run the other backend in a subprocess")
    ap.add_argument("--json", action="store_true", help="emit raw JSON")
    args = ap.parse_args()

    mine = run_suite()
    if args.json:
        print(json.dumps(mine, sort_keys=True))
        return 0

    columns = [mine]
    if args.compare:
        env = dict(os.environ)
        if mine["backend"] == "numba":
            env["TACPEG_DISABLE_NUMBA"] = "1"
        else:
            env.pop("TACPEG_DISABLE_NUMBA", None)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--json"],
            env=env, capture_output=True, text=True, check=True)
        columns.append(json.loads(out.stdout))

    names = sorted(columns[0]["timings_us"])
    header = f"{'kernel':<32}" + "".join(f"{c['backend']:>14}" for c in columns)
    if len(columns) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name in names:
        row = f"{name:<32}"
        for c in columns:
            row += f"{c['timings_us'][name]:>11.1f} us"
        if len(columns) == 2:
            a, b = columns[0]["timings_us"][name], columns[1]["timings_us"][name]
            slow, fast = max(a, b), min(a, b)
            winner = columns[0]["backend"] if a <= b else columns[1]["backend"]
            row += f"{slow / fast:>7.1f}x {winner}"
        print(row)
    return 0


if __name__ == "__main__":
    sys.exit(main())
