"""Intersection population chains for pairs of paths.

Under mu x mu the shared edges form a critical Galton-Watson chain where
each member has b children with probability 1/b and none otherwise.  Under
rho_r the lineages that survive forever form an inhomogeneous chain: a
member at generation n has l in {1..b} surviving children with probability
C(b,l) R(r-n-1)^l / (b R(r-n)).  Its b - l remaining children are doomed and
follow the critical chain conditioned on extinction, which for the 0-or-b
law is the same critical chain again (they die a.s. anyway).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .flow import VarianceProfile, profile_for
from .streams import chunks, stream

RUN_CHUNK = 4096
PAIR_BUDGET = 10**8


def extinction_prob(b: int, n: int) -> float:
    """psi^n(0) with psi(x) = (b-1)/b + x^b/b."""
    if n < 0:
        raise ValueError("n must be >= 0")
    x = 0.0
    for _ in range(n):
        x = (b - 1) / b + x**b / b
    return x


def gw_extinction_mc(b: int, n: int, runs: int, seed: int) -> tuple[float, float]:
    """(fraction of critical 0-or-b chains extinct by generation n, its std error)."""
    dead = 0
    for c, (lo, hi) in enumerate(chunks(runs, RUN_CHUNK)):
        rng = stream(seed, "gw", b, n, c)
        z = np.ones(hi - lo, dtype=np.int64)
        for _ in range(n):
            z = b * rng.binomial(z, 1.0 / b)
        dead += int(np.count_nonzero(z == 0))
    p = dead / runs
    return p, math.sqrt(p * (1 - p) / runs)


# -- states -----------------------------------------------------------------

@dataclass(frozen=True)
class PopulationState:
    """Occupied b-adic intervals at generation n, as rows of segment digits."""

    b: int
    generation: int
    addresses: np.ndarray = field(repr=False)   # (count, n) uint8, digits 1..b, sorted

    def __post_init__(self):
        a = self.addresses
        if a.ndim != 2 or a.shape[1] != self.generation:
            raise ValueError("addresses must have shape (count, generation)")
        if a.size and (a.min() < 1 or a.max() > self.b):
            raise ValueError("segment digit out of range")
        if a.shape[0] > 1:
            if len(np.unique(a, axis=0)) != a.shape[0]:
                raise ValueError("occupied addresses must be distinct")
        a.setflags(write=False)

    @classmethod
    def root(cls, b: int) -> "PopulationState":
        return cls(b, 0, np.zeros((1, 0), dtype=np.uint8))

    @classmethod
    def from_digits(cls, b: int, n: int, rows) -> "PopulationState":
        a = np.array(sorted(tuple(r) for r in rows), dtype=np.uint8).reshape(-1, n)
        return cls(b, n, a)

    @property
    def count(self) -> int:
        return int(self.addresses.shape[0])

    def prefix_counts(self, k: int) -> np.ndarray:
        """Occupied intervals per distinct length-k prefix."""
        if k == 0:
            return np.array([self.count])
        _, counts = np.unique(self.addresses[:, :k], axis=0, return_counts=True)
        return counts


def offspring_probs(n: int, profile: VarianceProfile) -> np.ndarray:
    """P[l surviving children], l = 0..b (entry 0 is always 0)."""
    b = profile.b
    profile.check_depth(n + 1)
    x = float(profile.R[n + 1])
    Rn = float(profile.R[n])
    p = np.array([0.0] + [math.comb(b, l) * x**l / (b * Rn) for l in range(1, b + 1)])
    if abs(math.fsum(p) - 1.0) > 1e-12:
        raise ValueError(f"offspring probabilities at n={n} sum to {math.fsum(p)!r}; "
                         "flow profile is inconsistent")
    return p


def _draw_offspring(rng, probs: np.ndarray, size: int) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(size), side="right")


def _place_children(rng, ell: np.ndarray, b: int) -> tuple[np.ndarray, np.ndarray]:
    """Parent index and segment digit of each child; uniform l-subsets."""
    keys = rng.random((ell.size, b))
    order = np.argsort(keys, axis=1)
    take = np.arange(b)[None, :] < ell[:, None]
    parent = np.nonzero(take)[0]
    digit = order[take] + 1
    return parent, digit


def rho_chain_step(state: PopulationState, r: float, profile: VarianceProfile,
                   rng: np.random.Generator) -> PopulationState:
    if state.count == 0:
        raise ValueError("state must be nonempty")
    probs = offspring_probs(state.generation, profile)
    ell = _draw_offspring(rng, probs, state.count)
    parent, digit = _place_children(rng, ell, state.b)
    rows = np.concatenate([state.addresses[parent], digit[:, None].astype(np.uint8)], axis=1)
    order = np.lexsort(rows.T[::-1]) if rows.shape[1] else np.arange(len(rows))
    return PopulationState(state.b, state.generation + 1, rows[order])


def simulate_state(b: int, r: float, n: int, rng: np.random.Generator,
                   profile: VarianceProfile | None = None) -> PopulationState:
    if profile is None:
        profile = profile_for(r, n + 1, b)
    state = PopulationState.root(b)
    for _ in range(n):
        state = rho_chain_step(state, r, profile, rng)
    return state


def martingale_estimate(state: PopulationState, r: float, profile: VarianceProfile) -> float:
    """m~_n = (R'(r-n)/R(r-n)) xi~_n."""
    n = state.generation
    profile.check_depth(n)
    return float(profile.Rprime[n] / profile.R[n]) * state.count


def total_overlap_estimate(xi_total, n: int, r: float, profile: VarianceProfile):
    """m_n = (R'(r-n)/(1+R(r-n))) xi_n; accepts scalars or arrays."""
    profile.check_depth(n)
    return float(profile.Rprime[n] / (1.0 + profile.R[n])) * np.asarray(xi_total, dtype=float)


# -- batched count chains ---------------------------------------------------

@dataclass(frozen=True)
class ChainCounts:
    """xi~ and xi at checkpoint generations; arrays of shape (len(gens), runs)."""

    b: int
    r: float
    gens: tuple[int, ...]
    xi_tilde: np.ndarray = field(repr=False)
    xi_total: np.ndarray = field(repr=False)    # -1 where the companion was not tracked
    profile: VarianceProfile = field(repr=False)

    def m_tilde(self) -> np.ndarray:
        w = np.array([self.profile.Rprime[n] / self.profile.R[n] for n in self.gens])
        return w[:, None] * self.xi_tilde

    def m_total(self) -> np.ndarray:
        w = np.array([self.profile.Rprime[n] / (1.0 + self.profile.R[n]) for n in self.gens])
        out = w[:, None] * self.xi_total.astype(float)
        out[self.xi_total < 0] = np.nan
        return out


def simulate_counts(b: int, r: float, gens, runs: int, seed: int,
                    total_until: int | None = None,
                    profile: VarianceProfile | None = None) -> ChainCounts:
    """Run `runs` rho_r chains and record xi~_n and xi_n at each n in gens.

    The total population xi_n = xi~_n + (doomed members) is tracked up to
    generation ``total_until`` (default: all of gens).
    """
    gens = tuple(sorted(set(int(g) for g in gens)))
    nmax = gens[-1]
    if total_until is None:
        total_until = nmax
    if profile is None:
        profile = profile_for(r, nmax + 1, b)
    profile.check_depth(nmax + 1)
    probs = [offspring_probs(k, profile) for k in range(nmax)]
    want = {g: i for i, g in enumerate(gens)}
    xt = np.empty((len(gens), runs), dtype=np.int64)
    xa = np.full((len(gens), runs), -1, dtype=np.int64)
    ells = np.arange(b + 1)
    for c, (lo, hi) in enumerate(chunks(runs, RUN_CHUNK)):
        rng = stream(seed, "rho-counts", b, c)
        alive = np.ones(hi - lo, dtype=np.int64)
        doomed = np.zeros(hi - lo, dtype=np.int64)
        for k in range(nmax + 1):
            if k in want:
                xt[want[k], lo:hi] = alive
                if k <= total_until:
                    xa[want[k], lo:hi] = alive + doomed
            if k == nmax:
                break
            fam = rng.multinomial(alive, probs[k])
            new_alive = fam @ ells
            if k < total_until:
                doomed = b * rng.binomial(doomed, 1.0 / b) + fam @ (b - ells)
            alive = new_alive
    return ChainCounts(b, float(r), gens, xt, xa, profile)


def exp_moment_check(a: float, n: int, runs: int, r: float, seed: int, b: int = 2,
                     profile: VarianceProfile | None = None) -> tuple[float, float, float]:
    """(MC mean of exp(a m~_n) under rho_r, its std error, R(r+a)/R(r))."""
    if profile is None:
        profile = profile_for(r, n + 1, b)
    target = float(profile_for(r + a, 0, b).R[0] / profile.R[0])
    if a == 0:
        return 1.0, 0.0, 1.0
    m = simulate_counts(b, r, [n], runs, seed, total_until=0, profile=profile).m_tilde()[0]
    v = np.exp(a * m)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(runs)), target


# -- intersection-time measure ----------------------------------------------

@dataclass(frozen=True)
class TauMeasure:
    b: int
    generation: int
    weight: float                  # mass per occupied interval, R'(r-n)/R(r-n)
    addresses: np.ndarray = field(repr=False)

    @property
    def total_mass(self) -> float:
        return self.weight * self.addresses.shape[0]

    def mass(self, prefix=()) -> float:
        """Mass of the b-adic interval with the given leading digits."""
        k = len(prefix)
        if k > self.generation:
            raise ValueError("prefix longer than the generation")
        if k == 0:
            return self.total_mass
        hit = np.all(self.addresses[:, :k] == np.asarray(prefix, dtype=np.uint8), axis=1)
        return self.weight * int(np.count_nonzero(hit))

    def density(self, x: float) -> float:
        """Density on [0, 1]: b^n * weight on occupied intervals, 0 elsewhere."""
        n, b = self.generation, self.b
        j = min(int(x * b**n), b**n - 1)
        digits = []
        for _ in range(n):
            j, d = divmod(j, b)
            digits.append(d + 1)
        digits.reverse()
        hit = np.all(self.addresses == np.asarray(digits, dtype=np.uint8), axis=1) if n else [True]
        return float(b**n * self.weight) if np.any(hit) else 0.0


def tau_measure(state: PopulationState, r: float, profile: VarianceProfile) -> TauMeasure:
    n = state.generation
    profile.check_depth(n)
    return TauMeasure(state.b, n, float(profile.Rprime[n] / profile.R[n]), state.addresses)


def log_hausdorff_sum(state: PopulationState, h: float) -> float:
    """xi~_n / (n log b)^h: the canonical b^-n cover of the intersection set."""
    if h < 0 or state.generation < 1:
        raise ValueError("need h >= 0 and n >= 1")
    return log_hausdorff_values(state.count, state.generation, h, state.b)


def log_hausdorff_values(xi_tilde, n: int, h: float, b: int):
    return np.asarray(xi_tilde, dtype=float) / (n * math.log(b)) ** h


# -- discrete energies --------------------------------------------------------

def _energy_from_square_sums(S: np.ndarray, n: int, h: float) -> np.ndarray:
    """sum over ordered pairs of g^h from S_k = sum over length-k prefixes of N^2.

    Pairs whose longest common prefix has length k < n separate at k + 1;
    pairs with equal addresses count with g = n.
    """
    S = np.atleast_2d(S)
    k = np.arange(n, dtype=float)
    diffs = S[:, :n] - S[:, 1:n + 1]
    return diffs @ (k + 1) ** h + S[:, n] * float(n) ** h


def energy_estimate(state: PopulationState, h: float, r: float, profile: VarianceProfile) -> float:
    """Q~_h^{(n)} = (R'/R)^2 sum_{e1, e2 occupied} g(e1, e2)^h, with g(e, e) = n."""
    n = state.generation
    profile.check_depth(n)
    w = float(profile.Rprime[n] / profile.R[n])
    if n == 0:
        return w * w * state.count**2
    S = np.array([[float(np.sum(state.prefix_counts(k).astype(float) ** 2)) for k in range(n + 1)]])
    return w * w * float(_energy_from_square_sums(S, n, h)[0])


def pair_energy_bruteforce(state: PopulationState, h: float) -> float:
    """Direct double sum over occupied pairs; small states only."""
    a = state.addresses
    if a.shape[0] ** 2 > PAIR_BUDGET:
        raise ValueError("pair budget exceeded")
    n = state.generation
    total = 0.0
    for i in range(a.shape[0]):
        neq = a != a[i]
        first = np.where(neq.any(axis=1), neq.argmax(axis=1) + 1, n)
        total += float(np.sum(first.astype(float) ** h))
    return total


def energy_batch(b: int, r: float, gens, hs, runs: int, seed: int,
                 chunk_runs: int = 64) -> dict[tuple[int, float], np.ndarray]:
    """Q~_h^{(n)} for every (n, h) over `runs` independent rho_r genealogies.

    The energy depends on the occupied set only through its genealogy (the
    prefix tree), so each chain is simulated as parent pointers and the
    square sums S_k come from the descendant counts.
    """
    gens = tuple(sorted(set(int(g) for g in gens)))
    nmax = gens[-1]
    profile = profile_for(r, nmax + 1, b)
    probs = [offspring_probs(k, profile) for k in range(nmax)]
    out = {(n, float(h)): np.empty(runs) for n in gens for h in hs}
    for c, (lo, hi) in enumerate(chunks(runs, chunk_runs)):
        rng = stream(seed, "rho-genealogy", b, c)
        size = hi - lo
        parents = []
        for k in range(nmax):
            ell = _draw_offspring(rng, probs[k], size)
            par = np.repeat(np.arange(size), ell)
            parents.append(par)
            size = par.size
        for n in gens:
            S = kernels.genealogy_square_sums(parents[:n], hi - lo)
            w = float(profile.Rprime[n] / profile.R[n])
            for h in hs:
                out[(n, float(h))][lo:hi] = w * w * _energy_from_square_sums(S, n, float(h))
    return out


def mixture_total_overlap(b: int, r: float, gens, runs: int, seed: int) -> np.ndarray:
    """m_n for pairs drawn from the normalised correlation measure.

    upsilon_r / (1 + R(r)) is the mixture of mu x mu (weight 1/(1+R)) and
    rho_r (weight R/(1+R)); m_n is a martingale under this mixture with
    constant mean R'(r)/(1+R(r)).  Returns an array of shape (len(gens), runs).
    """
    gens = tuple(sorted(set(int(g) for g in gens)))
    nmax = gens[-1]
    profile = profile_for(r, nmax + 1, b)
    R = float(profile.R[0])
    pick = stream(seed, "mixture-label", b).random(runs) < R / (1.0 + R)
    nrho = int(np.count_nonzero(pick))
    rho = simulate_counts(b, r, gens, nrho, seed, profile=profile).xi_total
    free = np.empty((len(gens), runs - nrho), dtype=np.int64)
    want = {g: i for i, g in enumerate(gens)}
    for c, (lo, hi) in enumerate(chunks(runs - nrho, RUN_CHUNK)):
        rng = stream(seed, "mixture-gw", b, c)
        z = np.ones(hi - lo, dtype=np.int64)
        for k in range(nmax + 1):
            if k in want:
                free[want[k], lo:hi] = z
            if k < nmax:
                z = b * rng.binomial(z, 1.0 / b)
    xi = np.empty((len(gens), runs), dtype=np.int64)
    xi[:, pick] = rho
    xi[:, ~pick] = free
    w = np.array([profile.Rprime[n] / (1.0 + profile.R[n]) for n in gens])
    return w[:, None] * xi
