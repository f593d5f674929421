"""Time the compiled kernels against the NumPy reference.

    python benchmarks/bench_kernels.py [--repeat R]
"""
import argparse
import timeit

import numpy as np

from czwave import _kernels_py as ref

try:
    from czwave import _kernels as ext
except ImportError:
    ext = None


def cases(rng):
    a = rng.random(1 << 14)
    img = rng.standard_normal((256, 256)) + 0j
    weight = rng.random((256, 256))
    steps = np.array([(i, j) for i in range(-3, 4) for j in range(-3, 4) if (i, j) != (0, 0)], dtype=np.int64)
    lengths = np.hypot(steps[:, 0], steps[:, 1]) * 0.01
    mask = (rng.random(1 << 14) < 0.97).astype(np.uint8)
    return {
        "holder_sup": lambda m: m.holder_sup(img, weight, steps, lengths, 0.5),
        "dyadic_block_means": lambda m: m.dyadic_block_means(a, 14),
        "dyadic_maximal": lambda m: m.dyadic_maximal(a, 14),
        "select_maximal_cubes": lambda m: m.select_maximal_cubes(mask, 0, 1 << 14, 4, 9),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}")
    for name, call in cases(rng).items():
        t_py = min(timeit.repeat(lambda: call(ref), number=1, repeat=args.repeat)) * 1e3
        if ext is None:
            print(f"{name:<22}{t_py:>14.3f}{'n/a':>14}{'':>10}")
            continue
        t_cy = min(timeit.repeat(lambda: call(ext), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<22}{t_py:>14.3f}{t_cy:>14.3f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
