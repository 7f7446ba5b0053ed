import math

import numpy as np
import pytest

from diamondlab.flow import (DEFAULT_DEPTH, FlowConstants, asymptotic_R, eval_beta,
                             eval_moment_profile, eval_R, eval_Rprime, fatou_coefficients,
                             fatou_coordinate, map_M, moment_step, profile_for, seed_R,
                             vartheta_correlation, energy_series_partial, _log_correlation)
from diamondlab.stats import RunStats
from diamondlab.streams import stream


def test_constants():
    c2, c3 = FlowConstants(2), FlowConstants(3)
    assert (c2.kappa2, c2.eta) == (2.0, 1.0)
    assert c3.kappa2 == 1.0 and abs(c3.eta - 2 / 3) < 1e-15
    with pytest.raises(ValueError):
        FlowConstants(1)


def test_map_M_values():
    assert map_M(0.0, 2) == 0.0
    assert map_M(1.0, 2) == 1.5
    assert map_M(0.5, 2) == 0.625
    for b in (2, 3, 5):
        for x in (0.0, 0.1, 1.0, 3.7):
            assert math.isclose(map_M(x, b), ((1 + x) ** b - 1) / b, rel_tol=1e-14)


def test_map_M_no_cancellation():
    x = 1e-12
    assert math.isclose(map_M(x, 2), x + x * x / 2, rel_tol=1e-15)


@pytest.mark.parametrize("b", [2, 3])
def test_fatou_conjugacy(b):
    for x in (1e-3, 5e-3, 2e-2):
        err = fatou_coordinate(map_M(x, b), b) - fatou_coordinate(x, b) - 1
        assert abs(err) < 50 * x**9 + 1e-12


def test_fatou_normalisation_matches_asymptotics():
    # the inverse carries no pure 1/t^2 term: (R - asymptotic) t^2 -> 0
    vals = [abs(seed_R(t, 2)[0] - asymptotic_R(t, 2)) * t * t for t in (-1e3, -1e4, -1e5)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 1e-2


def test_seed_below_floor_only():
    with pytest.raises(ValueError):
        seed_R(-10.0, 2)
    with pytest.raises(ValueError):
        eval_R(0.0, 20, 2)


def test_fatou_coefficients_first_terms():
    c = fatou_coefficients(2)
    assert math.isclose(c[0], -0.25, rel_tol=1e-15)
    assert math.isclose(c[1], 1 / 12, rel_tol=1e-15)


@pytest.mark.parametrize("b", [2, 3])
@pytest.mark.parametrize("r", [-5.0, -2.5, 0.0, 2.5, 5.0])
def test_depth_doubling(b, r):
    a, c = eval_R(r, 200, b), eval_R(r, 400, b)
    assert abs(a - c) / c <= 1e-6


def test_asymptotic_limit():
    n = 10_000
    prof = profile_for(0.0, n, 2)
    assert abs(n * prof.R[n] / 2 - 1) <= 2e-3
    assert abs(n * n * prof.Rprime[n] / 2 - 1) <= 1e-2


@pytest.mark.parametrize("b", [2, 3])
def test_shift_identity(b):
    # R(r+1) = M(R(r)) with a shared anchor
    for r in np.linspace(-5, 5, 11):
        hi = eval_R(r + 1, 301, b)
        lo = eval_R(r, 300, b)
        assert abs(hi - map_M(lo, b)) / hi <= 1e-12


def test_R_increasing():
    vals = [eval_R(r) for r in np.linspace(-5, 5, 21)]
    assert all(x < y for x, y in zip(vals, vals[1:]))
    assert all(v > 0 for v in vals)


def test_Rprime_positive_increasing():
    vals = [eval_Rprime(r) for r in np.linspace(-5, 5, 21)]
    assert all(v > 0 for v in vals)
    assert all(x < y for x, y in zip(vals, vals[1:]))


@pytest.mark.parametrize("b", [2, 3])
def test_Rprime_matches_finite_difference(b):
    h = 1e-4
    fd = (eval_R(h, 300, b) - eval_R(-h, 300, b)) / (2 * h)
    assert abs(eval_Rprime(0.0, 300, b) - fd) / fd <= 1e-5


@pytest.mark.parametrize("b", [2, 3])
def test_profile_invariants(b):
    p = eval_moment_profile(0.0, 300, b)
    assert np.all(np.diff(p.R) < 0)
    assert np.all(p.R >= 0) and np.all(p.R3 >= 0) and np.all(p.R4 >= 0)
    assert np.max(np.abs(p.R[:-1] - map_M(p.R[1:], b)) / p.R[:-1]) <= 1e-12
    chain = p.Rprime[1:] * (1 + p.R[1:]) ** (b - 1)
    assert np.max(np.abs(p.Rprime[:-1] - chain) / p.Rprime[:-1]) <= 1e-12
    assert p.R[0] == eval_R(0.0, 300, b)
    with pytest.raises(ValueError):
        p.R[0] = 1.0


def test_moment_profile_shape():
    p = eval_moment_profile(0.0, 200, 2)
    assert np.all(np.diff(p.R3[5:]) < 0) and np.all(np.diff(p.R4[5:]) < 0)
    # R3(t) and R4(t) are O(R(t)^2) for t in [-200, -50]; anchor far below
    q = eval_moment_profile(0.0, 300, 2)
    for arr in (q.R3, q.R4):
        ratio = arr[50:201] / q.R[50:201] ** 2
        assert ratio.max() < 10 and ratio.max() / ratio.min() < 2


def test_moment_profile_depth_doubling():
    a, c = eval_moment_profile(0.0, 200, 2), eval_moment_profile(0.0, 400, 2)
    assert abs(a.R3[0] / c.R3[0] - 1) <= 1e-4
    assert abs(a.R4[0] / c.R4[0] - 1) <= 1e-4


def test_r3_seed_perturbation_contracts():
    base = eval_moment_profile(0.0, 200, 2)
    delta = 1e-3
    pert = eval_moment_profile(0.0, 200, 2, seed_R3=delta)
    bound = delta * np.prod((1 + 3 * base.R[1:]) / 2)
    assert abs(pert.R3[0] - base.R3[0]) <= max(bound, delta * 1e-20) + 4 * np.spacing(base.R3[0])


def test_moment_step_trivial():
    assert moment_step(0.0, 0.0, 0.0, 2) == (0.0, 0.0, 0.0)
    for b in (2, 3, 4):
        for R in (1e-9, 0.25, 1.0, 3.0):
            assert moment_step(R, 0.0, 0.0, b)[0] == map_M(R, b)


def test_moment_step_known_value():
    assert moment_step(0.25, 0.0, 0.0625, 2) == (0.28125, 0.09375, 0.205078125)


@pytest.mark.parametrize("b", [2, 3])
def test_moment_step_small_mc(b):
    rng = stream(3, "moment-step-unit", b)
    N = 400_000
    W = np.where(rng.integers(0, 2, size=(N, b, b), dtype=np.int8) == 1, 1.5, 0.5)
    Y = W.prod(axis=2).sum(axis=1) / b - 1.0
    target = moment_step(0.25, 0.0, 0.0625, b)
    for k, t in zip((2, 3, 4), target):
        v = Y**k
        assert abs(v.mean() - t) <= 4 * v.std() / math.sqrt(N)


def test_eval_beta():
    c = FlowConstants(2)
    assert abs(eval_beta(100, 0.0, c) - 0.147934) <= 1e-6
    n = 10**12
    assert abs(eval_beta(n, 0.0, c) * math.sqrt(n) - math.sqrt(2)) < 1e-4
    for n in (10, 100, 1000):
        d = eval_beta(n, 0.0, FlowConstants(2, 2.0)) - eval_beta(n, 0.0, c)
        assert math.isclose(d, -2 / n, rel_tol=1e-12)
    with pytest.raises(ValueError):
        eval_beta(0, 0.0, c)
    with pytest.raises(ValueError):
        eval_beta(1, -10.0, c)


def test_vartheta_first_and_log_derivative():
    p = profile_for(0.0, 4000, 2)
    assert vartheta_correlation(1, p) == p.Rprime[1] ** 2
    logc = _log_correlation(p, 1000)
    d = logc[999] - logc[998]
    assert abs(d / (8 / 1000) - 1) <= 0.05


def test_vartheta_n8_law():
    p = profile_for(0.0, 4000, 2)
    a = vartheta_correlation(2000, p) / 2000.0**8
    c = vartheta_correlation(4000, p) / 4000.0**8
    assert abs(c / a - 1) < 0.02


def test_vartheta_depth_guard():
    p = eval_moment_profile(0.0, 100, 2)
    with pytest.raises(ValueError):
        vartheta_correlation(101, p)


def test_energy_series_growth():
    p = profile_for(0.0, 4000, 2)
    s2, s4 = energy_series_partial(8.5, 2000, p), energy_series_partial(8.5, 4000, p)
    assert s4 / s2 >= 2**0.4
    # lambda = 9: N -> 2N increments roughly constant (log growth)
    d1 = energy_series_partial(9, 2000, p) - energy_series_partial(9, 1000, p)
    d2 = energy_series_partial(9, 4000, p) - energy_series_partial(9, 2000, p)
    assert abs(d2 / d1 - 1) < 0.1


def test_profile_csv():
    p = eval_moment_profile(0.0, 60, 2)
    lines = p.to_csv().split("\n")
    assert lines[0] == "k,R,Rprime,R3,R4"
    assert len(lines) == 63 and lines[-1] == ""
    k, R, *_ = lines[1].split(",")
    assert k == "0" and float(R) == p.R[0]


def test_default_depth():
    assert DEFAULT_DEPTH == 300
    assert eval_R(0.0) == eval_R(0.0, 300, 2)


def test_runstats_merge_order():
    rng = np.random.default_rng(1)
    x = rng.lognormal(size=1000)
    parts = [RunStats.from_values(x[i:i + 100]) for i in range(0, 1000, 100)]
    a = RunStats()
    for p in parts:
        a = a.merge(p)
    b = RunStats()
    for p in reversed(parts):
        b = b.merge(p)
    full = RunStats.from_values(x)
    for f in ("mean", "M2", "M3", "M4"):
        assert math.isclose(getattr(a, f), getattr(full, f), rel_tol=1e-12)
        assert math.isclose(getattr(b, f), getattr(full, f), rel_tol=1e-12)
    c = RunStats()
    for v in x:
        c.push(v)
    for f in ("mean", "M2", "M3", "M4"):
        assert math.isclose(getattr(c, f), getattr(full, f), rel_tol=1e-10)
