"""Running moments up to order four with pairwise merging."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class RunStats:
    """Count, mean and central sums M2..M4 (Pebay's update/merge formulas)."""

    count: int = 0
    mean: float = 0.0
    M2: float = 0.0
    M3: float = 0.0
    M4: float = 0.0

    @classmethod
    def from_values(cls, values) -> "RunStats":
        x = np.asarray(values, dtype=float).ravel()
        n = x.size
        if n == 0:
            return cls()
        mean = float(x.mean())
        d = x - mean
        d2 = d * d
        return cls(n, mean, float(d2.sum()), float((d2 * d).sum()), float((d2 * d2).sum()))

    def push(self, x: float) -> None:
        n1 = self.count
        n = n1 + 1
        delta = x - self.mean
        dn = delta / n
        dn2 = dn * dn
        t1 = delta * dn * n1
        self.mean += dn
        self.M4 += t1 * dn2 * (n * n - 3 * n + 3) + 6 * dn2 * self.M2 - 4 * dn * self.M3
        self.M3 += t1 * dn * (n - 2) - 3 * dn * self.M2
        self.M2 += t1
        self.count = n

    def merge(self, other: "RunStats") -> "RunStats":
        na, nb = self.count, other.count
        if na == 0:
            return RunStats(**vars(other))
        if nb == 0:
            return RunStats(**vars(self))
        n = na + nb
        delta = other.mean - self.mean
        d2, d3, d4 = delta**2, delta**3, delta**4
        mean = self.mean + delta * nb / n
        M2 = self.M2 + other.M2 + d2 * na * nb / n
        M3 = (self.M3 + other.M3 + d3 * na * nb * (na - nb) / n**2
              + 3 * delta * (na * other.M2 - nb * self.M2) / n)
        M4 = (self.M4 + other.M4
              + d4 * na * nb * (na * na - na * nb + nb * nb) / n**3
              + 6 * d2 * (na * na * other.M2 + nb * nb * self.M2) / n**2
              + 4 * delta * (na * other.M3 - nb * self.M3) / n)
        return RunStats(n, mean, M2, M3, M4)

    # population-style central moments (divide by n); var uses n - 1
    @property
    def var(self) -> float:
        return self.M2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def m3(self) -> float:
        return self.M3 / self.count if self.count else 0.0

    @property
    def m4(self) -> float:
        return self.M4 / self.count if self.count else 0.0

    @property
    def se_mean(self) -> float:
        return math.sqrt(self.var / self.count) if self.count > 1 else 0.0

    @property
    def se_var(self) -> float:
        """Large-sample standard error of the sample variance."""
        if self.count < 2:
            return 0.0
        v = self.M2 / self.count
        return math.sqrt(max(self.m4 - v * v, 0.0) / self.count)


def merge_all(parts) -> RunStats:
    total = RunStats()
    for p in parts:
        total = total.merge(p)
    return total
