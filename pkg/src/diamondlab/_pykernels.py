"""Pure numpy implementations of the hot kernels.

Every function here has a compiled twin in ``_ckernels`` with the same
signature and the same random-number consumption order, so the two paths
agree to rounding (libm ``exp`` vs numpy's vectorised ``exp``).
"""

from __future__ import annotations

import numpy as np

KIND_CODES = {"gaussian": 0, "rademacher": 1, "shifted_exponential": 2}


def coarsen(values: np.ndarray, b: int) -> np.ndarray:
    """W_e = (1/b) sum_i prod_j W_{e x (i,j)}, branch-major child layout."""
    v = np.asarray(values, dtype=np.float64)
    if v.size % (b * b) or v.size < b * b:
        raise ValueError("array length is not a positive multiple of b^2")
    return v.reshape(-1, b, b).prod(axis=2).sum(axis=1) / b


def coarsen_to_root(values: np.ndarray, b: int) -> float:
    v = np.asarray(values, dtype=np.float64)
    while v.size > 1:
        v = coarsen(v, b)
    return float(v[0])


def _series_sums(rng: np.random.Generator, kind: int, b: int, nblocks: int) -> np.ndarray:
    """Sum of the b disorder variables along each series block.

    For rademacher disorder the count of +1 signs is returned instead.
    """
    if kind == 0:
        return np.sqrt(float(b)) * rng.standard_normal(nblocks)
    if kind == 1:
        nbits = nblocks * b
        raw = rng.bit_generator.random_raw((nbits + 63) // 64).astype("<u8")
        bits = np.unpackbits(raw.view(np.uint8), bitorder="little")[:nbits]
        return bits.reshape(nblocks, b).sum(axis=1, dtype=np.int64)
    if kind == 2:
        return rng.standard_exponential(nblocks * b).reshape(nblocks, b).sum(axis=1) - b
    raise ValueError(f"unknown disorder kind code {kind}")


def partition_root(rng: np.random.Generator, kind: int, b: int, n: int,
                   beta: float, lam: float) -> float:
    """One draw of W^{(0,n)} from fresh disorder at generation n >= 1.

    The b leaves in series along a branch multiply to exp(beta*S - b*lam)
    with S the sum of their disorder variables, so S is drawn directly.
    """
    nblocks = b ** (2 * n - 1)
    s = _series_sums(rng, kind, b, nblocks)
    if kind == 1:
        # s holds the number of +1 signs; only b+1 weights are possible
        table = np.exp(beta * (2.0 * np.arange(b + 1) - b) - b * lam)
        v = table[s]
    else:
        v = np.exp(beta * s - b * lam)
    v = v.reshape(-1, b).sum(axis=1) / b
    while v.size > 1:
        v = coarsen(v, b)
    return float(v[0])


def pool_combine(pool: np.ndarray, idx: np.ndarray, b: int) -> np.ndarray:
    """new[m] = (1/b) sum_i prod_j pool[idx[m, i, j]]."""
    return coarsen(pool[idx], b)


def genealogy_square_sums(parents: list[np.ndarray], nroots: int) -> np.ndarray:
    """S[root, k] = sum over generation-k members v of desc_n(v)^2.

    ``parents[k-1][i]`` is the index (within generation k-1) of the parent
    of member i at generation k; generation 0 holds one member per root.
    """
    n = len(parents)
    roots = [np.arange(nroots)]
    for par in parents:
        roots.append(roots[-1][par])
    S = np.zeros((nroots, n + 1))
    desc = np.ones(len(roots[n]))
    for k in range(n, -1, -1):
        S[:, k] = np.bincount(roots[k], weights=desc * desc, minlength=nroots)
        if k:
            desc = np.bincount(parents[k - 1], weights=desc, minlength=len(roots[k - 1]))
    return S
