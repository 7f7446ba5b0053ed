"""Variance flow R(r) and its companions on the diamond hierarchical lattice.

R solves R(r + 1) = M_b(R(r)) with M_b(x) = ((1 + x)^b - 1)/b and the
vanishing asymptotics R(r) = -kappa^2/r + kappa^2 eta log(-r)/r^2 + ... as
r -> -inf.  Values are produced by shooting: seed at a deep anchor
t = r - depth and iterate M_b forward, which is exact arithmetic apart from
the seed error.

The seed is the inverse of a truncated Fatou coordinate of M_b,

    Phi(x) = -kappa^2/x + eta log(x/kappa^2) + sum_k c_k x^k,
    Phi(M_b(x)) = Phi(x) + 1,

whose additive constant is fixed so that Phi^{-1}(t) carries no pure 1/t^2
term.  That is the same normalisation as the two-term asymptotic formula,
but the residual seed error is O(x^(K+1)) instead of O(log^2(-t)/t^3).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

VALIDITY_FLOOR = -50.0
DEFAULT_DEPTH = 300
FATOU_ORDER = 8


@dataclass(frozen=True)
class FlowConstants:
    b: int
    tau: float = 0.0

    def __post_init__(self):
        if self.b < 2:
            raise ValueError(f"b must be >= 2, got {self.b}")

    @property
    def kappa2(self) -> float:
        return 2.0 / (self.b - 1)

    @property
    def kappa(self) -> float:
        return math.sqrt(self.kappa2)

    @property
    def eta(self) -> float:
        return (self.b + 1) / (3.0 * (self.b - 1))


def _pow_minus_one(u, b: int):
    """(1 + u)^b - 1 as the binomial polynomial; no cancellation for u >= 0."""
    acc = 1.0
    for k in range(b, 1, -1):
        acc = math.comb(b, k - 1) + u * acc
    return u * acc


def map_M(x, b: int):
    """One renormalisation step ((1 + x)^b - 1)/b (works on arrays)."""
    return _pow_minus_one(x, b) / b


def asymptotic_R(t: float, b: int) -> float:
    """Two-term asymptotic formula for R(t), t << 0."""
    c = FlowConstants(b)
    return -c.kappa2 / t + c.kappa2 * c.eta * math.log(-t) / t**2


# -- Fatou coordinate ------------------------------------------------------

def _mul(p, q, order):
    out = [Fraction(0)] * (order + 1)
    for i, pi in enumerate(p):
        if pi == 0:
            continue
        for j, qj in enumerate(q[: order + 1 - i]):
            out[i + j] += pi * qj
    return out


@lru_cache(maxsize=None)
def fatou_coefficients(b: int, order: int = FATOU_ORDER) -> tuple[float, ...]:
    """Power-series coefficients c_1..c_order of the Fatou coordinate.

    Solved order by order from Phi(M(x)) - Phi(x) - 1 = 0 in exact rational
    arithmetic; c_k first appears at x^(k+1) with coefficient k*a, a=(b-1)/2.
    """
    P = order + 2
    kappa2 = Fraction(2, b - 1)
    eta = Fraction(b + 1, 3 * (b - 1))
    a = Fraction(b - 1, 2)
    # m(x) = M(x)/x - 1
    m = [Fraction(0)] * (P + 1)
    for k in range(2, b + 1):
        if k - 1 <= P:
            m[k - 1] = Fraction(math.comb(b, k), b)
    powers = [[Fraction(1)] + [Fraction(0)] * P]
    for _ in range(P + 1):
        powers.append(_mul(powers[-1], m, P))
    # m/(1+m) and log(1+m)
    s1 = [Fraction(0)] * (P + 1)
    logm = [Fraction(0)] * (P + 1)
    for j in range(1, P + 1):
        for i in range(P + 1):
            s1[i] += (-1) ** (j + 1) * powers[j][i]
            logm[i] += Fraction((-1) ** (j + 1), j) * powers[j][i]
    # residual without c-terms, as coefficients of x^p
    base = [Fraction(0)] * (P + 1)
    for p in range(P):
        base[p] += kappa2 * s1[p + 1]
    for p in range(P + 1):
        base[p] += eta * logm[p]
    base[0] -= 1
    assert base[0] == 0 and base[1] == 0
    # (1+m)^k - 1 shifted by x^k
    one_plus_m = [Fraction(1)] + m[1:]
    c = []
    shifted = []
    acc = [Fraction(1)] + [Fraction(0)] * P
    for k in range(1, order + 1):
        acc = _mul(acc, one_plus_m, P)
        row = [Fraction(0)] * (P + 1)
        for i in range(P + 1 - k):
            row[i + k] = acc[i] - (1 if i == 0 else 0)
        shifted.append(row)
    for k in range(1, order + 1):
        p = k + 1
        total = base[p] + sum(c[j] * shifted[j][p] for j in range(len(c)))
        ck = -total / (k * a)
        c.append(ck)
    return tuple(float(v) for v in c)


def fatou_coordinate(x: float, b: int, order: int = FATOU_ORDER) -> float:
    const = FlowConstants(b)
    coeffs = fatou_coefficients(b, order)
    series = sum(ck * x ** (k + 1) for k, ck in enumerate(coeffs))
    return -const.kappa2 / x + const.eta * math.log(x / const.kappa2) + series


def _fatou_derivative(x: float, b: int, order: int = FATOU_ORDER) -> float:
    const = FlowConstants(b)
    coeffs = fatou_coefficients(b, order)
    series = sum((k + 1) * ck * x**k for k, ck in enumerate(coeffs))
    return const.kappa2 / x**2 + const.eta / x + series


def seed_R(t: float, b: int) -> tuple[float, float]:
    """Return (R(t), R'(t)) at a deep anchor t <= VALIDITY_FLOOR."""
    if t > VALIDITY_FLOOR:
        raise ValueError(
            f"anchor t={t} lies above the validity floor {VALIDITY_FLOOR}; "
            "increase depth")
    x = asymptotic_R(t, b)
    for _ in range(50):
        step = (fatou_coordinate(x, b) - t) / _fatou_derivative(x, b)
        x -= step
        if abs(step) <= 1e-17 * x:
            break
    return x, 1.0 / _fatou_derivative(x, b)


# -- forward shooting ------------------------------------------------------

def eval_R(r: float, depth: int = DEFAULT_DEPTH, b: int = 2) -> float:
    x, _ = seed_R(r - depth, b)
    for _ in range(depth):
        x = map_M(x, b)
    return x


def eval_Rprime(r: float, depth: int = DEFAULT_DEPTH, b: int = 2) -> float:
    x, dx = seed_R(r - depth, b)
    for _ in range(depth):
        dx *= (1.0 + x) ** (b - 1)
        x = map_M(x, b)
    return dx


def moment_step(R: float, R3: float, R4: float, b: int) -> tuple[float, float, float]:
    """Centered moments of W = (1/b) sum_i prod_j W_ij from those of W_ij.

    Inputs/outputs are (variance, third, fourth) centered moments of mean-one
    variables.  Powers are expanded as binomial polynomials in the small
    quantities so the O(R^2) results survive cancellation at tiny R.
    """
    def pow_m1(u):
        return _pow_minus_one(u, b)

    y2 = pow_m1(R)
    y3 = pow_m1(3 * R + R3) - 3 * y2
    y4 = pow_m1(6 * R + 4 * R3 + R4) - 4 * pow_m1(3 * R + R3) + 6 * y2
    return y2 / b, y3 / b**2, (y4 + 3 * (b - 1) * y2 * y2) / b**3


@dataclass(frozen=True)
class VarianceProfile:
    """Flow values at r, r-1, ..., r-depth (index k <-> r-k)."""

    r: float
    depth: int
    b: int
    R: np.ndarray = field(repr=False)
    Rprime: np.ndarray = field(repr=False)
    R3: np.ndarray = field(repr=False)
    R4: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.R, self.Rprime, self.R3, self.R4):
            arr.setflags(write=False)

    def check_depth(self, n: int):
        if n > self.depth:
            raise ValueError(f"profile depth {self.depth} does not cover n={n}")

    def rows(self):
        for k in range(self.depth + 1):
            yield k, self.R[k], self.Rprime[k], self.R3[k], self.R4[k]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "R", "Rprime", "R3", "R4"])
        for k, *vals in self.rows():
            w.writerow([k] + [format(float(v), ".17g") for v in vals])
        return buf.getvalue()


def eval_moment_profile(r: float, depth: int = DEFAULT_DEPTH, b: int = 2,
                        seed_R3: float = 0.0, seed_R4: float = 0.0) -> VarianceProfile:
    """Tabulate R, R', R3, R4 at r - k, k = 0..depth.

    R3 and R4 start from the given anchor values (zero by default); the
    moment recursion contracts any seed error, so the choice is immaterial
    at the default depth.
    """
    x, dx = seed_R(r - depth, b)
    R = np.empty(depth + 1)
    Rp = np.empty(depth + 1)
    R3 = np.empty(depth + 1)
    R4 = np.empty(depth + 1)
    x3, x4 = float(seed_R3), float(seed_R4)
    R[depth], Rp[depth], R3[depth], R4[depth] = x, dx, x3, x4
    for k in range(depth - 1, -1, -1):
        dx *= (1.0 + x) ** (b - 1)
        x, x3, x4 = moment_step(x, x3, x4, b)
        R[k], Rp[k], R3[k], R4[k] = x, dx, x3, x4
    return VarianceProfile(r=r, depth=depth, b=b, R=R, Rprime=Rp, R3=R3, R4=R4)


@lru_cache(maxsize=64)
def cached_profile(r: float, depth: int, b: int) -> VarianceProfile:
    return eval_moment_profile(r, depth, b)


def profile_for(r: float, n: int, b: int) -> VarianceProfile:
    """Shared profile covering r, r-1, ..., r-n with the default margin."""
    depth = n + DEFAULT_DEPTH + max(0, math.ceil(r))
    return cached_profile(float(r), depth, b)


def eval_beta(n: int, r: float, constants: FlowConstants) -> float:
    """Critical weak-disorder inverse temperature beta_{n,r}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k, k2, eta, tau = constants.kappa, constants.kappa2, constants.eta, constants.tau
    beta = (k / math.sqrt(n) - tau * k2 / (2 * n)
            + k * eta * math.log(n) / n**1.5 + k * r / n**1.5)
    if beta <= 0:
        raise ValueError(f"beta_(n={n}, r={r}) = {beta} is not positive")
    return beta


def _log_correlation(profile: VarianceProfile, nmax: int) -> np.ndarray:
    """log C_{r,n} for n = 1..nmax."""
    profile.check_depth(nmax)
    b = profile.b
    fourth = np.log1p(6 * profile.R[1:nmax] + 4 * profile.R3[1:nmax] + profile.R4[1:nmax])
    prod = np.concatenate(([0.0], np.cumsum((b - 1) * fourth)))
    return 2 * np.log(profile.Rprime[1:nmax + 1]) + prod


def vartheta_correlation(n: int, profile: VarianceProfile) -> float:
    """Spatial correlation constant C_{r,n} (grows like n^8)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(np.exp(_log_correlation(profile, n)[n - 1]))


def energy_series_partial(lam: float, N: int, profile: VarianceProfile) -> float:
    """sum_{n<=N} (b-1)(b+1) C_{r,n} / n^lam."""
    b = profile.b
    n = np.arange(1, N + 1, dtype=float)
    logc = _log_correlation(profile, N)
    terms = (b - 1) * (b + 1) * np.exp(logc - lam * np.log(n))
    return float(math.fsum(terms))
