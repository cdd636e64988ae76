"""Timing comparison of the compiled and pure-Python sparse kernels.

Runs factorisation, triangular solves, and the selected-inverse
recursion on FEM precision matrices of increasing size, once per
available backend, and prints a table of medians with the speedup of
the compiled kernels over the Python mirror.

    python3 benchmarks/bench_kernels.py --sizes 20 40 60 --repeats 5
"""

import argparse
import statistics
import time

import numpy as np

import spdekit.sparse as sparse_mod
from spdekit.mesh import rectangle_mesh
from spdekit.precision import FieldModel, build_precision
from spdekit.sparse import available_backends, factorize, selected_inverse


def _precision_for(cells):
    mesh = rectangle_mesh(0.0, 1.0, 0.0, 1.0, cells, cells)
    model = FieldModel(mesh=mesh, alpha=2, kappa=8.0, tau=0.5)
    return build_precision(model)


def _time(func, repeats):
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        func()
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def bench_one(q, backend, repeats):
    sparse_mod.kernels = backend
    timings = {}
    timings["factorize"] = _time(lambda: factorize(q), repeats)
    factor = factorize(q)
    rhs = np.linspace(-1.0, 1.0, q.n)
    timings["solve"] = _time(lambda: factor.solve(rhs), repeats)
    timings["selected_inverse"] = _time(
        lambda: selected_inverse(factor), repeats
    )
    return timings


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="compare sparse kernel backends"
    )
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[20, 40, 60],
                        help="square mesh cell counts per side")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed repetitions; the median is reported")
    args = parser.parse_args(argv)

    backends = available_backends()
    if len(backends) < 2:
        print(f"only {list(backends)} built; timing it alone")

    original = sparse_mod.kernels
    header = f"{'stage':<18}{'n':>8}"
    for name in sorted(backends):
        header += f"{name + ' (s)':>16}"
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))

    try:
        for cells in args.sizes:
            q = _precision_for(cells)
            per_backend = {
                name: bench_one(q, mod, args.repeats)
                for name, mod in backends.items()
            }
            for stage in ("factorize", "solve", "selected_inverse"):
                row = f"{stage:<18}{q.n:>8}"
                for name in sorted(backends):
                    row += f"{per_backend[name][stage]:>16.6f}"
                if len(backends) == 2:
                    ratio = (per_backend["python"][stage]
                             / per_backend["cython"][stage])
                    row += f"{ratio:>9.1f}x"
                print(row)
    finally:
        sparse_mod.kernels = original


if __name__ == "__main__":
    main()
