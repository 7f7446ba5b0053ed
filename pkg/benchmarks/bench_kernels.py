"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run on identical inputs (same seeds) under both backends; the
table reports the best wall time of several repeats and the largest relative
difference between the two outputs.
"""

import argparse
import time

import numpy as np

from diamondlab.kernels import KIND_CODES, backend_module
from diamondlab.flow import FlowConstants, eval_beta
from diamondlab.polymer_mc import DisorderModel
from diamondlab.streams import stream


def best_time(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases():
    b, n = 2, 10
    c = FlowConstants(b)
    beta = eval_beta(n, 0.0, c)
    for kind, code in KIND_CODES.items():
        def run(mod, code=code, kind=kind):
            lam = DisorderModel(kind).log_mgf(beta)
            return np.array([mod.partition_root(stream(1, "bench", code, i), code, b, n,
                                                beta, lam) for i in range(4)])
        yield f"partition_root {kind} n={n} x4", run

    pool = stream(2, "bench-pool").lognormal(-0.5, 1.0, size=10**6)
    idx = stream(3, "bench-idx").integers(0, pool.size, size=(10**6, 2, 2))
    yield "pool_combine 1e6", lambda mod: mod.pool_combine(pool, idx, 2)

    rng = stream(4, "bench-gen")
    sizes, parents = [2000], []
    for _ in range(200):
        m = int(sizes[-1] * 1.01)
        parents.append(np.sort(rng.integers(0, sizes[-1], size=m)))
        sizes.append(m)
    yield f"genealogy 200 gens, {sum(sizes)} nodes", \
        lambda mod: mod.genealogy_square_sums(parents, 2000)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    py, cc = backend_module("python"), backend_module("compiled")
    print(f"{'kernel':42s} {'numpy s':>9s} {'compiled s':>11s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, fn in cases():
        tp, op = best_time(lambda: fn(py), args.repeat)
        tc, oc = best_time(lambda: fn(cc), args.repeat)
        diff = float(np.max(np.abs(op - oc) / np.maximum(np.abs(op), 1e-300)))
        print(f"{name:42s} {tp:9.4f} {tc:11.4f} {tp / tc:7.1f}x {diff:13.1e}")


if __name__ == "__main__":
    main()
