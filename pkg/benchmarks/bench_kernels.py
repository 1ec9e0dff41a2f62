"""Compiled vs pure-Python kernels: wall time per call.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from vmfvae import _backend, _kernels_py

CASES = {
    "log_gamma(7.3)": lambda k: k.log_gamma(7.3),
    "log_bessel_i(11.5, 80)": lambda k: k.log_bessel_i(11.5, 80.0),
    "log_bessel_i(99, 500)": lambda k: k.log_bessel_i(99.0, 500.0),
    "log_bessel_i(24, 2000)": lambda k: k.log_bessel_i(24.0, 2000.0),
    "sample_wood(1000 x kappa=50, d=50)": lambda k: k.sample_wood(
        np.full(1000, 50.0), 50, np.random.default_rng(0), 10 ** 6),
}


def best_time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="timing repeats; the best is reported")
    args = parser.parse_args()
    backends = {"python": _kernels_py}
    if "compiled" in _backend.available():
        from vmfvae import _kernels
        backends["compiled"] = _kernels
    print(f"{'case':40s}" + "".join(f"{name:>14s}" for name in backends) + f"{'speedup':>10s}")
    for case, fn in CASES.items():
        times = {name: best_time(lambda k=k: fn(k), args.repeat) for name, k in backends.items()}
        speedup = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{case:40s}" + "".join(f"{t * 1e6:12.2f}us" for t in times.values()) + f"{speedup:9.1f}x")


if __name__ == "__main__":
    main()
