"""Exact enumeration of the two-path correlation measure on Gamma_N x Gamma_N."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError
from .flow import VarianceProfile, profile_for
from .lattice import HierPath, LatticeParams, overlap_distribution, overlap_matrix, path_count

ENUMERATION_BUDGET = {2: 3, 3: 2}


@dataclass(frozen=True)
class CorrelationTable:
    b: int
    N: int
    r: float
    R_at: float          # R(r - N)
    R_top: float         # R(r), from the same profile
    xi: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)

    @property
    def total(self) -> float:
        return math.fsum(self.masses.ravel())

    def row_marginals(self) -> np.ndarray:
        return self.masses.sum(axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p_index", "q_index", "xi", "mass"])
        n = self.masses.shape[0]
        for i in range(n):
            for j in range(n):
                w.writerow([i, j, int(self.xi[i, j]), format(float(self.masses[i, j]), ".17g")])
        return buf.getvalue()


def _check_budget(b: int, N: int):
    if N < 0 or N > ENUMERATION_BUDGET.get(b, -1):
        raise BudgetError("enumeration-budget", f"enumeration budget exceeded for b={b}, N={N}")


def build_table(b: int, N: int, r: float, profile: VarianceProfile | None = None) -> CorrelationTable:
    _check_budget(b, N)
    if profile is None:
        profile = profile_for(r, N, b)
    profile.check_depth(N)
    x = float(profile.R[N])
    xi = overlap_matrix(b, N)
    G = path_count(LatticeParams(b), N)
    masses = (1.0 + x) ** xi / G**2
    masses.setflags(write=False)
    return CorrelationTable(b, N, r, x, float(profile.R[0]), xi, masses)


def lebesgue_split(table: CorrelationTable) -> tuple[np.ndarray, np.ndarray]:
    """(uniform part mu x mu, normalised singular part rho) on Gamma_N^2."""
    if table.R_top <= 0:
        raise ValueError("R(r) must be positive")
    G2 = table.masses.size
    uniform = np.full(table.masses.shape, 1.0 / G2)
    # (1+x)^xi - 1 with expm1 so that pairs with xi = 0 come out exactly zero
    rho = np.expm1(table.xi * math.log1p(table.R_at)) / G2 / table.R_top
    return uniform, rho


def rn_factor(p: HierPath, q: HierPath, n: int, r: float, t: float) -> float:
    """phi_n^{(r,t)}(p, q) = ((1 + R(t-n))/(1 + R(r-n)))^{xi_n(p, q)}."""
    from .lattice import shared_edge_count
    if p.generation != n or q.generation != n:
        raise ValueError("paths must live in Gamma_n")
    xi = shared_edge_count(p, q)
    if t == r or xi == 0:
        return 1.0
    Rt = profile_for(t, n, p.b).R[n]
    Rr = profile_for(r, n, p.b).R[n]
    return ((1.0 + Rt) / (1.0 + Rr)) ** xi


def mass_identity_from_histogram(b: int, N: int, r: float, profile: VarianceProfile | None = None) -> tuple[float, float]:
    """(total mass from the overlap histogram, 1 + R(r)); usable far past enumeration."""
    if profile is None:
        profile = profile_for(r, N, b)
    x = float(profile.R[N])
    hist = overlap_distribution(b, N)
    total_pairs = sum(hist.values())
    total = math.fsum(count / total_pairs * (1.0 + x) ** k for k, count in hist.items())
    return total, 1.0 + float(profile.R[0])
