"""Compare the compiled and numpy kernel backends on representative sizes.

Usage: python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from ratioreject import _kernels


def cases(n, rng):
    w = rng.uniform(0.1, 1.0, n)
    w /= w.sum()
    s = rng.uniform(0.0, 5.0, n)
    ratios = rng.uniform(0.0, 2.0, n)
    correct = rng.integers(0, 2, n).astype(float)
    loss = 1.0 - correct
    taus = np.arange(1, 51) / 50
    return {
        "kl_log_partition": lambda k: k.kl_log_partition(w, s),
        "solve_alpha_normalizer(alpha=3)": lambda k: k.solve_alpha_normalizer(w, s, 3.0),
        "solve_alpha_normalizer(alpha=1.5)": lambda k: k.solve_alpha_normalizer(w, s, 1.5),
        "sweep_counts(50 taus)": lambda k: k.sweep_counts(ratios, correct, loss, taus),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--sizes", type=int, nargs="+", default=[100, 10_000, 1_000_000])
    args = parser.parse_args()

    backends = {name: _kernels.load(name) for name in _kernels.available()}
    print(f"active backend: {_kernels.BACKEND}; compared: {', '.join(backends)}")
    header = f"{'kernel':<36}{'n':>10}" + "".join(f"{b + ' (ms)':>16}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    rng = np.random.default_rng(0)
    for n in args.sizes:
        for name, call in cases(n, rng).items():
            number = max(1, int(2e5 // n))
            times = {}
            for b, mod in backends.items():
                best = min(timeit.repeat(lambda: call(mod), number=number, repeat=args.repeat))
                times[b] = 1e3 * best / number
            row = f"{name:<36}{n:>10}" + "".join(f"{times[b]:>16.4f}" for b in backends)
            if len(times) == 2:
                row += f"{times['python'] / times['cython']:>9.1f}x"
            print(row)


if __name__ == "__main__":
    main()
