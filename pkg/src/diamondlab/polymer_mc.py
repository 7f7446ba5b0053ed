"""Monte Carlo for the disordered polymer on D_n and for the limiting masses.

Partition functions are built bottom-up: generation-n weights
exp(beta*omega - lambda(beta)) are coarsened by
W_e = (1/b) sum_i prod_j W_{e x (i,j)} down to the root edge.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from . import kernels
from .errors import BudgetError
from .flow import FlowConstants, eval_beta, map_M, profile_for
from .lattice import HierPath, LatticeParams, path_count
from .stats import RunStats, merge_all
from .streams import chunks, stream

ENTRY_BUDGET = 2**30      # entries of a single base array
TREE_BUDGET = 2**20       # entries at the seed level of sample_limit_tree
CHUNK = 256               # samples per work unit; fixes the reduction order


@dataclass(frozen=True)
class DisorderModel:
    kind: str

    def __post_init__(self):
        if self.kind not in kernels.KIND_CODES:
            raise ValueError(f"unknown disorder kind {self.kind!r}")

    @property
    def code(self) -> int:
        return kernels.KIND_CODES[self.kind]

    @property
    def tau(self) -> float:
        return 2.0 if self.kind == "shifted_exponential" else 0.0

    def check_beta(self, beta: float):
        if self.kind == "shifted_exponential" and not beta < 1.0:
            raise ValueError(f"beta={beta} outside the MGF domain beta < 1")

    def log_mgf(self, beta: float) -> float:
        self.check_beta(beta)
        if self.kind == "gaussian":
            return 0.5 * beta * beta
        if self.kind == "rademacher":
            # log cosh, written to stay finite for large |beta|
            a = abs(beta)
            return a + math.log1p(math.exp(-2 * a)) - math.log(2.0)
        return -beta - math.log1p(-beta)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(size)
        if self.kind == "rademacher":
            return 2.0 * rng.integers(0, 2, size=size) - 1.0
        return rng.standard_exponential(size) - 1.0

    def leaf_variance(self, beta: float) -> float:
        """Var of exp(beta*omega - lambda(beta)) = exp(lambda(2 beta) - 2 lambda(beta)) - 1."""
        return math.expm1(self.log_mgf(2 * beta) - 2 * self.log_mgf(beta))


@dataclass(frozen=True)
class PartitionArray:
    b: int
    generation: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = self.values
        if v.ndim != 1 or v.size != self.b ** (2 * self.generation):
            raise ValueError("array length must be b^(2k)")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("partition weights must be finite and nonnegative")
        v.setflags(write=False)


def base_array(n: int, beta: float, model: DisorderModel, rng: np.random.Generator,
               b: int = 2) -> PartitionArray:
    """i.i.d. mean-one weights exp(beta*omega - lambda(beta)) on the edges of D_n."""
    size = b ** (2 * n)
    if size > ENTRY_BUDGET:
        raise BudgetError("entry-budget", f"b^(2n) = {size} exceeds {ENTRY_BUDGET}")
    lam = model.log_mgf(beta)
    if beta == 0:
        return PartitionArray(b, n, np.ones(size))
    return PartitionArray(b, n, np.exp(beta * model.sample(rng, size) - lam))


def coarsen(arr: PartitionArray) -> PartitionArray:
    if arr.generation < 1:
        raise ValueError("cannot coarsen a generation-0 array")
    return PartitionArray(arr.b, arr.generation - 1, kernels.coarsen(arr.values, arr.b))


def coarsen_to_root(arr: PartitionArray) -> float:
    while arr.generation > 0:
        arr = coarsen(arr)
    return float(arr.values[0])


def path_sum(arr: PartitionArray) -> float:
    """(1/|Gamma_n|) sum_p prod_{h on p} W_h by enumerating paths; tiny n only."""
    from .lattice import edge_indices, enumerate_paths
    params = LatticeParams(arr.b)
    total = math.fsum(float(np.prod(arr.values[edge_indices(p)]))
                      for p in enumerate_paths(params, arr.generation))
    return total / path_count(params, arr.generation)


# -- partition-function sampling -------------------------------------------

def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("DPL_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def _map_chunks(fn, total: int, threads: int | None, size: int = CHUNK):
    blocks = list(chunks(total, size))
    threads = resolve_threads(threads)
    if threads == 1 or len(blocks) == 1:
        return [fn(lo, hi) for lo, hi in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda blk: fn(*blk), blocks))


def partition_samples(b: int, n: int, beta: float, model: DisorderModel, samples: int,
                      seed: int, threads: int | None = None) -> np.ndarray:
    """Independent draws of W^{(0,n)}; sample i always uses the same stream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    size = b ** (2 * n)
    if size > ENTRY_BUDGET:
        raise BudgetError("entry-budget", f"b^(2n) = {size} exceeds {ENTRY_BUDGET}")
    lam = model.log_mgf(beta)
    code = model.code

    def work(lo, hi):
        return np.array([kernels.partition_root(stream(seed, "partition:" + model.kind, b, n, i),
                                                code, b, n, beta, lam)
                         for i in range(lo, hi)])

    return np.concatenate(_map_chunks(work, samples, threads))


def simulate_partition(b: int, n: int, r: float, model: DisorderModel, samples: int,
                       seed: int, threads: int | None = None, beta: float | None = None) -> RunStats:
    """RunStats of W^{(0,n)} at beta = beta_{n,r} (or an explicit beta)."""
    if beta is None:
        beta = eval_beta(n, r, FlowConstants(b, model.tau))
    values = partition_samples(b, n, beta, model, samples, seed, threads)
    return merge_all(RunStats.from_values(values[lo:hi]) for lo, hi in chunks(samples, CHUNK))


def exact_partition_variance(b: int, n: int, beta: float, model: DisorderModel) -> float:
    """Var W^{(0,n)} = M^n(leaf variance); exact for any i.i.d. mean-one leaves."""
    v = model.leaf_variance(beta)
    for _ in range(n):
        v = map_M(v, b)
    return v


def variance_matched_beta(b: int, n: int, r: float, model: DisorderModel) -> float:
    """beta whose leaf variance equals R(r - n), so that Var W^{(0,n)} = R(r) exactly."""
    target = float(profile_for(r, n, b).R[n])
    # the leaf variance needs E[exp(2 beta omega)], i.e. 2 beta < 1 for the exponential law
    hi = 0.4999 if model.kind == "shifted_exponential" else 10.0
    return brentq(lambda x: model.leaf_variance(x) - target, 1e-12, hi, xtol=1e-15)


# -- limit law: population dynamics ----------------------------------------

def lognormal_pool(rng: np.random.Generator, size: int, variance: float) -> np.ndarray:
    """Mean-one lognormal draws with the given variance."""
    if variance == 0:
        return np.ones(size)
    s2 = math.log1p(variance)
    return np.exp(math.sqrt(s2) * rng.standard_normal(size) - 0.5 * s2)


def _pin_variance(pool: np.ndarray, target: float) -> np.ndarray:
    """Map W -> W^g / mean(W^g) with g chosen so the pool variance equals target.

    Leaves the pool (mean-normalised) untouched if the target is out of reach.
    """
    logw = np.log(pool)
    logn = math.log(pool.size)
    goal = math.log1p(target)
    if not np.all(np.isfinite(logw)) or goal >= 0.9 * logn:
        return pool / pool.mean()

    def excess(g):
        return logsumexp(2 * g * logw) - 2 * logsumexp(g * logw) + logn - goal

    lo, hi = 0.5, 2.0
    while excess(lo) > 0 and lo > 1e-6:
        lo /= 2
    while excess(hi) < 0 and hi < 1e3:
        hi *= 2
    if excess(lo) > 0 or excess(hi) < 0:
        return pool / pool.mean()
    g = brentq(excess, lo, hi, xtol=1e-13)
    shifted = g * logw
    shifted -= logsumexp(shifted) - logn
    return np.exp(shifted)


def limit_pool(b: int, r: float, levels: int, pool_size: int, seed: int,
               stabilize: bool = True, init_variance: float | None = None) -> np.ndarray:
    """Final pool of the population-dynamics solver for W^{(0)} at parameter r.

    The pool starts as lognormal with variance R(r - levels) and is pushed
    through the combining map `levels` times.  With ``stabilize`` every
    intermediate pool is renormalised to mean one and variance R(r - k); the
    last step is left free so the returned moments are genuine outputs.
    """
    if pool_size < 1 or levels < 0:
        raise ValueError("pool_size must be >= 1 and levels >= 0")
    prof = profile_for(r, levels, b)
    if init_variance is None:
        init_variance = float(prof.R[levels])
    rng = stream(seed, "pool", b, levels, pool_size)
    pool = lognormal_pool(rng, pool_size, init_variance)
    for step in range(levels):
        k = levels - step - 1          # the new pool represents r - k
        idx = rng.integers(0, pool_size, size=pool_size * b * b)
        pool = kernels.pool_combine(pool, idx, b)
        if stabilize and k > 0 and init_variance > 0:
            pool = _pin_variance(pool, float(prof.R[k]))
    return pool


def sample_limit_mass_pool(b: int, r: float, levels: int, pool_size: int, seed: int,
                           stabilize: bool = True) -> RunStats:
    pool = limit_pool(b, r, levels, pool_size, seed, stabilize)
    return merge_all(RunStats.from_values(pool[lo:hi]) for lo, hi in chunks(pool.size, 1 << 16))


def strong_disorder_scan(b: int, r_list, levels: int, pool_size: int, seed: int,
                         eps: float = 0.01, stabilize: bool = True) -> list[tuple[float, float]]:
    """(r, fraction of the limit pool below eps) for each r."""
    out = []
    for r in r_list:
        pool = limit_pool(b, float(r), levels, pool_size, seed, stabilize)
        out.append((float(r), float(np.mean(pool < eps))))
    return out


# -- limit law: exact shallow trees ----------------------------------------

def sample_limit_tree(b: int, r: float, K: int, tree_depth: int, seed: int,
                      sample: int = 0) -> list[PartitionArray]:
    """Jointly consistent arrays W^{(0)}, ..., W^{(K)} for one realisation.

    The seed level K + tree_depth carries i.i.d. lognormal weights with
    variance R(r - K - tree_depth); every coarser level is computed from it.
    """
    top = K + tree_depth
    if K < 0 or tree_depth < 0:
        raise ValueError("K and tree_depth must be >= 0")
    size = b ** (2 * top)
    if size > TREE_BUDGET:
        raise BudgetError("tree-budget", f"b^(2(K+tree_depth)) = {size} exceeds {TREE_BUDGET}")
    var = float(profile_for(r, top, b).R[top])
    rng = stream(seed, "tree", b, K, tree_depth, sample)
    arr = PartitionArray(b, top, lognormal_pool(rng, size, var))
    levels = [arr]
    while arr.generation > 0:
        arr = coarsen(arr)
        levels.append(arr)
    levels.reverse()
    return levels[: K + 1]


def limit_tree_roots(b: int, r: float, tree_depth: int, samples: int, seed: int,
                     threads: int | None = None) -> np.ndarray:
    """Root masses W^{(0)} of independent trees (K = 0)."""
    size = b ** (2 * tree_depth)
    if size > TREE_BUDGET:
        raise BudgetError("tree-budget", f"b^(2 tree_depth) = {size} exceeds {TREE_BUDGET}")
    var = float(profile_for(r, tree_depth, b).R[tree_depth])

    def work(lo, hi):
        out = np.empty(hi - lo)
        for i in range(lo, hi):
            rng = stream(seed, "tree", b, 0, tree_depth, i)
            out[i - lo] = kernels.coarsen_to_root(lognormal_pool(rng, size, var), b)
        return out

    return np.concatenate(_map_chunks(work, samples, threads))


def cylinder_mass(arrays: list[PartitionArray], p: HierPath) -> float:
    """M_r(p) = (1/|Gamma_N|) prod_{h on p} W^{(N)}_h for p in Gamma_N."""
    from .lattice import edge_indices
    N = p.generation
    if N >= len(arrays):
        raise ValueError("arrays do not reach the path's generation")
    w = arrays[N].values[edge_indices(p)]
    return float(np.prod(w)) / path_count(LatticeParams(p.b), N)


def sample_polymer_path(arrays: list[PartitionArray], N: int, rng: np.random.Generator) -> HierPath:
    """Draw p in Gamma_N with probability M_r(p)/M_r(Gamma)."""
    if N > len(arrays) - 1:
        raise ValueError("need arrays up to generation N")
    b = arrays[0].b

    def descend(k, e):
        if k == N:
            return ()
        w = arrays[k + 1].values
        base = e * b * b
        weights = np.array([np.prod(w[base + i * b: base + (i + 1) * b]) for i in range(b)])
        total = weights.sum()
        if not total > 0:
            raise ValueError(f"zero total weight at generation {k}, edge {e}")
        i = int(rng.choice(b, p=weights / total))
        out = (i + 1,)
        for j in range(b):
            out += descend(k + 1, base + i * b + j)
        return out

    return HierPath(b, N, descend(0, 0))
