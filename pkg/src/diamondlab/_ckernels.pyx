# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see _pykernels for the reference semantics."""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, sqrt
from libc.stdint cimport uint64_t, int64_t
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_normal_fill, random_standard_exponential_fill)

cnp.import_array()


cdef void _coarsen_inplace(double* v, Py_ssize_t m, int b) noexcept nogil:
    """Reduce m = k*b*b values to k values at the front of v."""
    cdef Py_ssize_t e, i, j, base
    cdef Py_ssize_t k = m // (b * b)
    cdef double acc, prod
    for e in range(k):
        base = e * b * b
        acc = 0.0
        for i in range(b):
            prod = v[base + i * b]
            for j in range(1, b):
                prod = prod * v[base + i * b + j]
            acc = acc + prod
        v[e] = acc / b


def coarsen(values, int b):
    cdef cnp.ndarray[double, ndim=1, mode="c"] v = np.array(values, dtype=np.float64, copy=True).ravel()
    cdef Py_ssize_t m = v.shape[0]
    if m % (b * b) or m < b * b:
        raise ValueError("array length is not a positive multiple of b^2")
    with nogil:
        _coarsen_inplace(&v[0], m, b)
    return v[: m // (b * b)].copy()


def coarsen_to_root(values, int b):
    cdef cnp.ndarray[double, ndim=1, mode="c"] v = np.array(values, dtype=np.float64, copy=True).ravel()
    cdef Py_ssize_t m = v.shape[0]
    with nogil:
        while m > 1:
            _coarsen_inplace(&v[0], m, b)
            m = m // (b * b)
    return float(v[0])


def partition_root(rng, int kind, int b, int n, double beta, double lam):
    cdef Py_ssize_t nblocks = b ** (2 * n - 1)
    cdef Py_ssize_t nbits, nwords, g, blk, i, j, m
    cdef cnp.ndarray[double, ndim=1, mode="c"] buf = np.empty(nblocks * (b if kind == 2 else 1))
    cdef double* v = &buf[0]
    cdef double sqrtb = sqrt(<double>b)
    cdef double blam = b * lam
    cdef double s, acc
    cdef uint64_t word = 0
    cdef int ones
    cdef double table[65]
    bg = rng.bit_generator
    cdef bitgen_t* bitgen = <bitgen_t*> PyCapsule_GetPointer(bg.capsule, "BitGenerator")
    if kind < 0 or kind > 2:
        raise ValueError(f"unknown disorder kind code {kind}")
    if kind == 1 and b > 64:
        raise ValueError("rademacher kernel supports b <= 64")
    with bg.lock, nogil:
        if kind == 0:
            random_standard_normal_fill(bitgen, nblocks, v)
            for blk in range(nblocks):
                s = sqrtb * v[blk]
                v[blk] = exp(beta * s - blam)
        elif kind == 1:
            # b fair signs in series take only b+1 sums, so tabulate the weights
            for j in range(b + 1):
                table[j] = exp(beta * <double>(2 * j - b) - blam)
            nbits = nblocks * b
            g = 0
            for blk in range(nblocks):
                ones = 0
                for j in range(b):
                    if g % 64 == 0:
                        word = bitgen.next_uint64(bitgen.state)
                    ones += <int>((word >> (g % 64)) & 1)
                    g += 1
                v[blk] = table[ones]
        else:
            random_standard_exponential_fill(bitgen, nblocks * b, v)
            for blk in range(nblocks):
                s = v[blk * b]
                for j in range(1, b):
                    s = s + v[blk * b + j]
                v[blk] = exp(beta * (s - b) - blam)
    with nogil:
        m = nblocks // b
        for i in range(m):
            acc = v[i * b]
            for j in range(1, b):
                acc = acc + v[i * b + j]
            v[i] = acc / b
        while m > 1:
            _coarsen_inplace(v, m, b)
            m = m // (b * b)
    return float(v[0])


def pool_combine(pool, idx, int b):
    cdef cnp.ndarray[double, ndim=1, mode="c"] p = np.ascontiguousarray(pool, dtype=np.float64)
    cdef cnp.ndarray[int64_t, ndim=1, mode="c"] ix = np.ascontiguousarray(idx, dtype=np.int64).ravel()
    cdef Py_ssize_t bb = b * b
    if ix.shape[0] % bb:
        raise ValueError("index length is not a multiple of b^2")
    cdef Py_ssize_t m = ix.shape[0] // bb
    cdef Py_ssize_t size = p.shape[0]
    cdef cnp.ndarray[double, ndim=1, mode="c"] out = np.empty(m)
    cdef Py_ssize_t e, i, j, base, k
    cdef double acc, prod
    for k in range(ix.shape[0]):
        if ix[k] < 0 or ix[k] >= size:
            raise IndexError("pool index out of range")
    with nogil:
        for e in range(m):
            base = e * bb
            acc = 0.0
            for i in range(b):
                prod = p[ix[base + i * b]]
                for j in range(1, b):
                    prod = prod * p[ix[base + i * b + j]]
                acc = acc + prod
            out[e] = acc / b
    return out


def genealogy_square_sums(parents, Py_ssize_t nroots):
    cdef Py_ssize_t n = len(parents)
    cdef cnp.ndarray[int64_t, ndim=1, mode="c"] sizes = np.array(
        [nroots] + [len(p) for p in parents], dtype=np.int64)
    cdef cnp.ndarray[int64_t, ndim=1, mode="c"] offsets = np.zeros(n + 2, dtype=np.int64)
    offsets[1:] = np.cumsum(sizes)
    cdef Py_ssize_t total = offsets[n + 1]
    cdef cnp.ndarray[int64_t, ndim=1, mode="c"] par = np.full(total, -1, dtype=np.int64)
    cdef Py_ssize_t k, i, lo, hi, plo
    for k in range(n):
        arr = np.ascontiguousarray(parents[k], dtype=np.int64)
        if len(arr) and (arr.min() < 0 or arr.max() >= sizes[k]):
            raise IndexError("parent index out of range")
        par[offsets[k + 1]:offsets[k + 2]] = arr
    cdef cnp.ndarray[int64_t, ndim=1, mode="c"] root = np.empty(total, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] desc = np.zeros(total)
    cdef cnp.ndarray[double, ndim=2, mode="c"] S = np.zeros((nroots, n + 1))
    with nogil:
        for i in range(nroots):
            root[i] = i
        for k in range(1, n + 1):
            lo = offsets[k]
            hi = offsets[k + 1]
            plo = offsets[k - 1]
            for i in range(lo, hi):
                root[i] = root[plo + par[i]]
        for i in range(offsets[n], offsets[n + 1]):
            desc[i] = 1.0
        for k in range(n, -1, -1):
            lo = offsets[k]
            hi = offsets[k + 1]
            for i in range(lo, hi):
                S[root[i], k] += desc[i] * desc[i]
            if k:
                plo = offsets[k - 1]
                for i in range(lo, hi):
                    desc[plo + par[i]] += desc[i]
    return S
