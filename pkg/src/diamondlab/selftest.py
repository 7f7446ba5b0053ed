"""Fast built-in checks: exact identities plus a few small Monte Carlo runs."""

from __future__ import annotations

import math

import numpy as np

FAULTS = ("flow-tolerance",)


def run_selftest(fault: str | None = None, seed: int = 20240601) -> list[tuple[str, bool, str]]:
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}")
    from . import kernels
    from .correlation import build_table, lebesgue_split
    from .flow import eval_moment_profile, eval_R, map_M, moment_step
    from .intersections import extinction_prob, gw_extinction_mc, simulate_counts
    from .lattice import LatticeParams, overlap_matrix, path_count
    from .polymer_mc import DisorderModel, PartitionArray, coarsen_to_root, partition_samples, path_sum

    out = []

    def add(name, ok, detail=""):
        out.append((name, bool(ok), detail))

    # lattice
    ok = all(path_count(LatticeParams(b), n + 1) == b * path_count(LatticeParams(b), n) ** b
             for b in (2, 3) for n in range(5))
    add("lattice.path_count_recursion", ok)
    xi = overlap_matrix(2, 2)
    add("lattice.overlap_mean_one", int(xi.sum()) == xi.shape[0] ** 2, f"sum={int(xi.sum())}")
    add("lattice.overlap_symmetric", bool(np.array_equal(xi, xi.T)))

    # flow
    tol = -1.0 if fault == "flow-tolerance" else 1e-12
    worst = 0.0
    for b in (2, 3):
        p = eval_moment_profile(0.0, 300, b)
        worst = max(worst, float(np.max(np.abs(p.R[:-1] - map_M(p.R[1:], b)) / p.R[:-1])))
        chain = p.Rprime[1:] * (1 + p.R[1:]) ** (b - 1)
        worst = max(worst, float(np.max(np.abs(p.Rprime[:-1] - chain) / p.Rprime[:-1])))
    add("flow.recursion_identities", worst <= tol, f"max rel err {worst:.3g}, tol {tol:g}")
    dd = max(abs(eval_R(r, 200, b) - eval_R(r, 400, b)) / eval_R(r, 400, b)
             for b in (2, 3) for r in (-5.0, 0.0, 5.0))
    add("flow.depth_doubling", dd <= 1e-6, f"{dd:.3g}")
    add("flow.moment_step_fixed_point", moment_step(0.0, 0.0, 0.0, 2) == (0.0, 0.0, 0.0))
    add("flow.moment_step_variance", moment_step(1.0, 0.0, 0.0, 2)[0] == map_M(1.0, 2))

    # correlation
    worst = 0.0
    for b, N in ((2, 1), (2, 2), (2, 3), (3, 1), (3, 2)):
        for r in (-3.0, 0.0, 2.0):
            t = build_table(b, N, r)
            worst = max(worst, abs(t.total - 1 - t.R_top) / (1 + t.R_top))
            _, rho = lebesgue_split(t)
            worst = max(worst, abs(math.fsum(rho.ravel()) - 1))
    add("correlation.mass_identity", worst <= 1e-9, f"{worst:.3g}")

    # coarsening vs path enumeration
    rng = np.random.default_rng(seed)
    arr = PartitionArray(2, 2, rng.random(16) + 0.5)
    a, bb = coarsen_to_root(arr), path_sum(arr)
    add("polymer.coarsen_path_sum", abs(a - bb) <= 1e-12 * bb, f"{a!r} vs {bb!r}")
    v = partition_samples(2, 3, 0.0, DisorderModel("gaussian"), 8, seed)
    add("polymer.beta_zero_exact", bool(np.all(v == 1.0)))

    # backends agree
    if kernels.BACKEND == "compiled":
        from . import _ckernels, _pykernels
        from .streams import stream
        x = [_ckernels.partition_root(stream(seed, "st", k), k, 2, 4, 0.3, 0.01) for k in range(3)]
        y = [_pykernels.partition_root(stream(seed, "st", k), k, 2, 4, 0.3, 0.01) for k in range(3)]
        err = max(abs(p - q) / q for p, q in zip(x, y))
        add("kernels.backends_agree", err <= 1e-12, f"{err:.3g}")

    # small Monte Carlo
    add("gw.psi_cubed", extinction_prob(2, 3) == 0.6953125)
    f, se = gw_extinction_mc(2, 10, 20000, seed)
    target = extinction_prob(2, 10)
    add("gw.extinction_mc", abs(f - target) <= 3 * se, f"{f:.4f} vs {target:.4f} (se {se:.4f})")
    c = simulate_counts(2, 0.0, [10], 20000, seed, total_until=0)
    m = c.m_tilde()[0]
    tgt = c.profile.Rprime[0] / c.profile.R[0]
    se = m.std(ddof=1) / math.sqrt(m.size)
    add("rho.martingale_mean", abs(m.mean() - tgt) <= 3 * se, f"{m.mean():.4f} vs {tgt:.4f}")

    # determinism across thread counts
    from .polymer_mc import simulate_partition
    s1 = simulate_partition(2, 4, 0.0, DisorderModel("gaussian"), 600, seed, threads=1)
    s2 = simulate_partition(2, 4, 0.0, DisorderModel("gaussian"), 600, seed, threads=3)
    add("determinism.threads", vars(s1) == vars(s2))
    return out
