"""Compare the compiled and numpy kernel backends.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat 5] [--sizes 500,2000,5000]``

For each problem size both backends are timed on identical inputs (best of
``--repeat`` runs) and their outputs are checked for equality.
"""

import argparse
import timeit

import numpy as np

from geea import _kernels_py, kernels

try:
    from geea import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def _ranking_case(n: int, rng: np.random.Generator):
    # coarse scores produce many ties, the slow path of the tie rule
    scores = np.round(rng.standard_normal((n, n)), 2)
    return scores, rng.permutation(n)


def _multi_hot_case(n: int, rng: np.random.Generator, per_row: int = 8):
    counts = rng.poisson(per_row, n)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    indices = rng.integers(0, n, indptr[-1])
    rows = rng.integers(0, n, min(n, 2500))
    return indptr, indices, rows, n


def _best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--sizes", default="500,2000,5000")
    args = parser.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; only the numpy backend is available")
    backends = [("numpy", _kernels_py)] + ([("cython", _compiled)] if _compiled else [])
    rng = np.random.default_rng(0)

    print(f"{'kernel':<10}{'n':>7}" + "".join(f"{name + ' ms':>12}" for name, _ in backends)
          + (f"{'speedup':>10}" if len(backends) == 2 else ""))
    for n in (int(s) for s in args.sizes.split(",")):
        cases = {
            "true_ranks": (kernels.true_ranks, _ranking_case(n, rng)),
            "multi_hot": (kernels.multi_hot, _multi_hot_case(n, rng)),
        }
        for name, (fn, case) in cases.items():
            outs, times = [], []
            for _, impl in backends:
                outs.append(fn(*case, impl=impl))
                times.append(_best(lambda: fn(*case, impl=impl), args.repeat) * 1e3)
            for other in outs[1:]:
                np.testing.assert_array_equal(outs[0], other)
            line = f"{name:<10}{n:>7}" + "".join(f"{t:>12.2f}" for t in times)
            if len(times) == 2:
                line += f"{times[0] / times[1]:>9.1f}x"
            print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
