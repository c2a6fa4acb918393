"""Compare the compiled and numpy path-reduction kernels.

Run with ``python benchmarks/bench_kernels.py [--replicas R] [--points M]``.
Prints the best-of-N wall time per backend, the speed-up, and whether the
two backends agree bit for bit.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gaussconj import kernels
from gaussconj.core import RandomStream
from gaussconj.limit import EnsembleSpec, LimitProcess, LimitVariant


def _inputs(n: int, replicas: int, points: int, seed: int):
    spec = EnsembleSpec.build([1.0] * n)
    lp = LimitProcess(spec, LimitVariant.standard(), 0.05, points - 1)
    X, scale, shift, coef = lp.components(RandomStream(seed, 0), replicas)
    return X, scale, shift, coef, lp.drift


def _time(backend: str, args, j: int, strides, repeats: int):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = kernels.reduce_paths(*args, j, 0.0, strides, 0, None, 1, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--replicas", type=int, default=4096)
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args(argv)

    data = _inputs(args.n, args.replicas, args.points, args.seed)
    strides = [1, 2, 4]
    print(f"n={args.n} replicas={args.replicas} points={args.points} strides={strides}")
    for j, label in ((args.n, "min"), (1, "max"), (max(1, args.n - 1), "order")):
        results = {}
        for backend in kernels.available_backends():
            results[backend] = _time(backend, data, j, strides, args.repeats)
            print(f"  {label:5s} j={j} {backend:7s} {results[backend][0] * 1e3:8.2f} ms")
        if "cython" in results:
            (tp, op), (tc, oc) = results["python"], results["cython"]
            same = all(np.array_equal(a, b) for a, b in zip(op, oc))
            print(f"  {label:5s} speed-up {tp / tc:5.1f}x, identical={same}")


if __name__ == "__main__":
    main()
