"""Time the numba and numpy box-search kernels on random saliency maps.

    python benchmarks/bench_kernels.py [--sizes 16 32 64] [--repeats 5]

Each row also checks that both flavours return the same box.
"""
import argparse
import time

import numpy as np

from cvsa.kernels import max_excess_numba, max_excess_numpy, max_mean_numba, max_mean_numpy


def _best_time(fn, args, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    gen = np.random.default_rng(args.seed)

    # compile outside the timed region
    warm = gen.random((4, 4))
    max_excess_numba(warm - warm.mean(), 1e-12)
    max_mean_numba(warm, 2, 1e-12)

    print(f"{'kernel':<12}{'size':>6}{'numba ms':>11}{'numpy ms':>11}{'speedup':>9}  same")
    for n in args.sizes:
        s = gen.random((n, n))
        e = s - s.mean()
        tol = 1e-10 * np.abs(e).sum()
        min_area = max(1, int(np.ceil(0.05 * n * n)))
        cases = [
            ("max_excess", max_excess_numba, max_excess_numpy, (e, tol)),
            ("max_mean", max_mean_numba, max_mean_numpy, (s, min_area, 1e-10)),
        ]
        for name, fast, slow, kargs in cases:
            tf, of = _best_time(fast, kargs, args.repeats)
            ts, os_ = _best_time(slow, kargs, args.repeats)
            same = tuple(of[:4]) == tuple(os_[:4])
            print(f"{name:<12}{n:>6}{tf * 1e3:>11.2f}{ts * 1e3:>11.2f}{ts / tf:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
