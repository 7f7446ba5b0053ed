"""Combinatorics of the diamond graphs D_n with branching = segmenting = b.

An edge of D_n is addressed by n digit pairs (branch, segment), coarsest
first.  A directed path is a tree of branch decisions stored flat in
depth-first order: the top-level branch, then the b sub-paths (one per
segment of that branch), each laid out the same way.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class LatticeParams:
    b: int

    def __post_init__(self):
        if self.b < 2:
            raise ValueError(f"b must be >= 2, got {self.b}")

    def edge_count(self, n: int) -> int:
        return self.b ** (2 * n)

    def path_count(self, n: int) -> int:
        return path_count(self, n)


def decision_count(b: int, n: int) -> int:
    """(b^n - 1)/(b - 1): branch choices needed to specify a path in D_n."""
    return (b**n - 1) // (b - 1)


def path_count(params: LatticeParams, n: int) -> int:
    if n < 0:
        raise ValueError("generation must be >= 0")
    return params.b ** decision_count(params.b, n)


@dataclass(frozen=True)
class EdgeAddress:
    b: int
    digits: tuple[tuple[int, int], ...]

    def __post_init__(self):
        for br, seg in self.digits:
            if not (1 <= br <= self.b and 1 <= seg <= self.b):
                raise ValueError(f"digit {(br, seg)} out of range for b={self.b}")

    @property
    def generation(self) -> int:
        return len(self.digits)

    @property
    def index(self) -> int:
        """Canonical base-b^2 index, most significant digit first."""
        b = self.b
        idx = 0
        for br, seg in self.digits:
            idx = idx * b * b + (br - 1) * b + (seg - 1)
        return idx

    @classmethod
    def from_index(cls, b: int, n: int, index: int) -> "EdgeAddress":
        if not 0 <= index < b ** (2 * n):
            raise ValueError("edge index out of range")
        digits = []
        for _ in range(n):
            index, d = divmod(index, b * b)
            digits.append((d // b + 1, d % b + 1))
        return cls(b, tuple(reversed(digits)))


@dataclass(frozen=True)
class HierPath:
    b: int
    generation: int
    decisions: tuple[int, ...]

    def __post_init__(self):
        if len(self.decisions) != decision_count(self.b, self.generation):
            raise ValueError(
                f"generation-{self.generation} path needs "
                f"{decision_count(self.b, self.generation)} decisions, "
                f"got {len(self.decisions)}")
        if any(not 1 <= d <= self.b for d in self.decisions):
            raise ValueError("branch decision out of range")

    @property
    def top(self) -> int:
        return self.decisions[0]

    def subpaths(self) -> list["HierPath"]:
        """The b generation-(n-1) paths inside the segments of the top branch."""
        if self.generation == 0:
            raise ValueError("the generation-0 path has no sub-paths")
        size = decision_count(self.b, self.generation - 1)
        return [HierPath(self.b, self.generation - 1,
                         self.decisions[1 + j * size: 1 + (j + 1) * size])
                for j in range(self.b)]

    @property
    def index(self) -> int:
        """Canonical integer: decisions read as a base-b numeral."""
        idx = 0
        for d in self.decisions:
            idx = idx * self.b + (d - 1)
        return idx

    @classmethod
    def from_index(cls, b: int, n: int, index: int) -> "HierPath":
        L = decision_count(b, n)
        digits = []
        for _ in range(L):
            index, d = divmod(index, b)
            digits.append(d + 1)
        return cls(b, n, tuple(reversed(digits)))

    def coarse_grain(self, N: int) -> "HierPath":
        """The enveloping generation-N path [p]_N."""
        if not 0 <= N <= self.generation:
            raise ValueError("can only coarse-grain to a lower generation")
        if N == 0:
            return HierPath(self.b, 0, ())
        subs = [s.coarse_grain(N - 1) for s in self.subpaths()]
        return HierPath(self.b, N, (self.top,) + sum((s.decisions for s in subs), ()))


def edges_of_path(p: HierPath) -> list[EdgeAddress]:
    """Edges traversed by p, in time order."""
    return [EdgeAddress(p.b, d) for d in _edge_digits(p)]


def _edge_digits(p: HierPath):
    if p.generation == 0:
        return [()]
    out = []
    for j, sub in enumerate(p.subpaths(), start=1):
        out.extend(((p.top, j),) + tail for tail in _edge_digits(sub))
    return out


def edge_indices(p: HierPath) -> np.ndarray:
    return np.array([e.index for e in edges_of_path(p)], dtype=np.int64)


def shared_edge_count(p: HierPath, q: HierPath) -> int:
    """xi_n(p, q): number of generation-n edges shared by the two paths."""
    if p.b != q.b or p.generation != q.generation:
        raise ValueError("paths must share b and generation")
    if p.generation == 0:
        return 1
    if p.top != q.top:
        return 0
    return sum(shared_edge_count(s, t) for s, t in zip(p.subpaths(), q.subpaths()))


def separation_generation(e: EdgeAddress, f: EdgeAddress) -> int:
    """Smallest k >= 1 at which the length-k digit prefixes differ."""
    if e.generation != f.generation:
        raise ValueError("edges must have the same generation")
    for k, (x, y) in enumerate(zip(e.digits, f.digits), start=1):
        if x != y:
            return k
    raise ValueError("separation generation is undefined for identical edges")


def sample_uniform_path(params: LatticeParams, n: int, rng: np.random.Generator) -> HierPath:
    L = decision_count(params.b, n)
    return HierPath(params.b, n, tuple(int(d) for d in rng.integers(1, params.b + 1, size=L)))


def enumerate_paths(params: LatticeParams, n: int):
    """All of Gamma_n in canonical index order."""
    L = decision_count(params.b, n)
    for decisions in itertools.product(range(1, params.b + 1), repeat=L):
        yield HierPath(params.b, n, decisions)


@lru_cache(maxsize=16)
def overlap_matrix(b: int, n: int) -> np.ndarray:
    """xi_n over Gamma_n x Gamma_n via the path/edge incidence matrix."""
    paths = list(enumerate_paths(LatticeParams(b), n))
    incidence = np.zeros((len(paths), b ** (2 * n)), dtype=np.int32)
    for i, p in enumerate(paths):
        incidence[i, edge_indices(p)] = 1
    xi = incidence @ incidence.T
    xi.setflags(write=False)
    return xi


def overlap_distribution(b: int, n: int) -> dict[int, int]:
    """Number of ordered pairs in Gamma_n x Gamma_n with each overlap value.

    Uses the generating-function recursion G_n = psi(G_{n-1}), G_0(z) = z,
    with psi(x) = (b-1)/b + x^b/b, so it scales to generations far beyond
    enumeration.
    """
    poly = [Fraction(0), Fraction(1)]
    for _ in range(n):
        power = [Fraction(1)]
        for _ in range(b):
            nxt = [Fraction(0)] * (len(power) + len(poly) - 1)
            for i, pi in enumerate(power):
                if pi:
                    for j, qj in enumerate(poly):
                        nxt[i + j] += pi * qj
            power = nxt
        poly = [v / b for v in power]
        poly[0] += Fraction(b - 1, b)
    total = path_count(LatticeParams(b), n) ** 2
    out = {}
    for k, v in enumerate(poly):
        if v:
            count = v * total
            assert count.denominator == 1
            out[k] = int(count)
    return out
