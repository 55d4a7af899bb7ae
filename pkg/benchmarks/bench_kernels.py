"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--frames 49]

Shapes follow the default pipeline: 42 joints on a 60x80 grid (640x480
image at 8 px per cell) and a 3x3x3 causal head on the compressed volume.
Each kernel is called once untimed so JIT compilation is excluded.
"""

import argparse
import statistics
import time

import numpy as np

from egoctl import _accel, kernels


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def cases(rng, frames):
    n, gh, gw = 42, 60, 80
    centers = rng.uniform(0, gw, (n, 2))
    heat = kernels.heatmaps_numpy(centers, 1.5, gh, gw)
    disp = rng.uniform(0.5, 4.0, n)
    valid = rng.random(n) > 0.1
    att = kernels.depth_weights_numpy(heat, disp, valid, 1.0, 1e-6)
    feats = rng.normal(size=(n, 16))
    emb = rng.normal(size=(n, 32))
    t_lat = 1 + (frames - 1) // 4
    x = rng.normal(size=(t_lat, 48, gh, gw))
    w = rng.normal(size=(16, 48, 3, 3, 3)) * 0.05
    b = np.zeros(16)
    return {
        "heatmaps": lambda impl: getattr(kernels, f"heatmaps_{impl}")(centers, 1.5, gh, gw),
        "depth_weights": lambda impl: getattr(kernels, f"depth_weights_{impl}")(heat, disp, valid, 1.0, 1e-6),
        "propagate": lambda impl: getattr(kernels, f"propagate_{impl}")(feats, att, heat, valid),
        "splat": lambda impl: getattr(kernels, f"splat_{impl}")(emb, heat),
        "causal_conv3d": lambda impl: getattr(kernels, f"causal_conv3d_{impl}")(x, w, b),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=10)
    ap.add_argument("--frames", type=int, default=49, help="video frames before temporal compression")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    impls = ["numpy"] + (["numba"] if _accel.NUMBA_AVAILABLE else [])
    if len(impls) == 1:
        print("numba not installed; timing the numpy path only")

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<15}" + "".join(f"{i + ' best':>14}{i + ' median':>16}" for i in impls) + f"{'speedup':>10}")
    for name, run in cases(rng, args.frames).items():
        row, best = f"{name:<15}", {}
        for impl in impls:
            lo, med = best_of(lambda: run(impl), args.repeat)
            best[impl] = lo
            row += f"{lo * 1e3:>12.2f}ms{med * 1e3:>14.2f}ms"
        if "numba" in best:
            row += f"{best['numpy'] / best['numba']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
