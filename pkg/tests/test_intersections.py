import math

import numpy as np
import pytest

from diamondlab.flow import profile_for
from diamondlab.intersections import (PopulationState, energy_batch,
                                      energy_estimate, exp_moment_check, extinction_prob,
                                      gw_extinction_mc, log_hausdorff_sum, martingale_estimate,
                                      mixture_total_overlap, offspring_probs, pair_energy_bruteforce,
                                      rho_chain_step, simulate_counts, simulate_state,
                                      tau_measure, total_overlap_estimate)
from diamondlab.streams import stream


def test_extinction_values():
    assert extinction_prob(2, 0) == 0.0
    assert extinction_prob(2, 1) == 0.5
    assert extinction_prob(2, 2) == 0.625
    assert extinction_prob(2, 3) == 0.6953125
    # psi(1) = 1
    assert (2 - 1) / 2 + 1.0**2 / 2 == 1.0


def test_extinction_mc():
    f, se = gw_extinction_mc(2, 10, 100_000, seed=1)
    assert abs(f - extinction_prob(2, 10)) <= 3 * se


@pytest.mark.parametrize("b", [2, 3])
def test_offspring_normalisation_deep(b):
    prof = profile_for(0.0, 10_001, b)
    for n in (0, 1, 10, 100, 1000, 10_000):
        p = offspring_probs(n, prof)
        assert p[0] == 0.0
        assert abs(math.fsum(p) - 1) <= 1e-12
    assert offspring_probs(10_000, profile_for(0.0, 10_001, 2))[1] >= 0.999


def test_state_validation():
    with pytest.raises(ValueError):
        PopulationState(2, 1, np.array([[1], [1]], dtype=np.uint8))
    with pytest.raises(ValueError):
        PopulationState(2, 1, np.array([[3]], dtype=np.uint8))
    s = PopulationState.from_digits(2, 2, [(2, 1), (1, 2)])
    assert s.count == 2 and s.addresses[0].tolist() == [1, 2]


def test_chain_step_structure():
    prof = profile_for(0.0, 40, 2)
    rng = stream(1, "chain")
    s = PopulationState.root(2)
    for _ in range(30):
        t = rho_chain_step(s, 0.0, prof, rng)
        assert t.count >= s.count >= 1
        # every child extends an occupied parent
        parents = {tuple(row) for row in s.addresses}
        assert all(tuple(row[:-1]) in parents for row in t.addresses)
        s = t


def test_forced_single_line_martingale_vanishes():
    prof = profile_for(0.0, 1001, 2)
    vals = [martingale_estimate(PopulationState(2, n, np.ones((1, n), dtype=np.uint8)), 0.0, prof)
            for n in (10, 100, 1000)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 2e-3


def test_martingale_constant_mean():
    c = simulate_counts(2, 0.0, [5, 10, 20, 40, 60], 100_000, seed=3)
    m = c.m_tilde()
    target = c.profile.Rprime[0] / c.profile.R[0]
    se = m.std(axis=1, ddof=1) / math.sqrt(m.shape[1])
    assert np.all(np.abs(m.mean(axis=1) - target) <= 3 * se)
    assert np.all(c.xi_tilde >= 1)
    assert np.all(c.xi_total >= c.xi_tilde)


def test_single_state_agrees_with_counts_in_law():
    prof = profile_for(0.0, 21, 2)
    rng = stream(4, "states")
    xs = np.array([simulate_state(2, 0.0, 20, rng, prof).count for _ in range(3000)])
    c = simulate_counts(2, 0.0, [20], 30_000, seed=4, total_until=0)
    a, b = xs.mean(), c.xi_tilde[0].mean()
    se = math.hypot(xs.std() / math.sqrt(xs.size), c.xi_tilde[0].std() / math.sqrt(30_000))
    assert abs(a - b) <= 3 * se


def test_total_martingale_under_mixture():
    m = mixture_total_overlap(2, 0.0, [5, 20, 60], 100_000, seed=5)
    prof = profile_for(0.0, 61, 2)
    target = prof.Rprime[0] / (1 + prof.R[0])
    se = m.std(axis=1, ddof=1) / math.sqrt(m.shape[1])
    assert np.all(np.abs(m.mean(axis=1) - target) <= 3 * se)


def test_total_overlap_estimate_formula():
    prof = profile_for(0.0, 11, 2)
    assert total_overlap_estimate(7, 10, 0.0, prof) == 7 * prof.Rprime[10] / (1 + prof.R[10])


def test_paired_difference_decays():
    c = simulate_counts(2, 0.0, [100, 1000], 4000, seed=6)
    d = c.m_total() - c.m_tilde()
    rms = np.sqrt((d**2).mean(axis=1))
    ratio = rms[0] / rms[1]
    assert math.sqrt(10) / 2 <= ratio <= 2 * math.sqrt(10)


def test_exp_moment_trivial_and_close():
    assert exp_moment_check(0.0, 50, 10, 0.0, seed=1)[0] == 1.0
    est, se, target = exp_moment_check(-0.5, 100, 20_000, 0.0, seed=2)
    assert abs(est / target - 1) < 0.05


def test_tau_measure():
    prof = profile_for(0.0, 13, 2)
    s = simulate_state(2, 0.0, 12, stream(3, "tau"), prof)
    tau = tau_measure(s, 0.0, prof)
    assert tau.total_mass == martingale_estimate(s, 0.0, prof)
    assert tau.mass() == tau.total_mass
    assert math.isclose(tau.mass((1,)) + tau.mass((2,)), tau.total_mass, rel_tol=1e-15)
    # density integrates to the mass
    n = s.generation
    grid = (np.arange(2**n) + 0.5) / 2**n
    integral = sum(tau.density(x) for x in grid) / 2**n
    assert math.isclose(integral, tau.total_mass, rel_tol=1e-12)


def test_tau_first_digit_exchangeable():
    prof = profile_for(0.0, 9, 2)
    rng = stream(9, "exch")
    frac = []
    for _ in range(4000):
        s = simulate_state(2, 0.0, 8, rng, prof)
        tau = tau_measure(s, 0.0, prof)
        frac.append(tau.mass((1,)) / tau.total_mass)
    frac = np.array(frac)
    assert abs(frac.mean() - 0.5) <= 3 * frac.std() / math.sqrt(frac.size)


def test_digit_marginals_uniform():
    prof = profile_for(0.0, 7, 2)
    rng = stream(10, "digits")
    ones = np.zeros(6)
    total = 0
    for _ in range(3000):
        a = simulate_state(2, 0.0, 6, rng, prof).addresses
        ones += (a == 1).sum(axis=0)
        total += a.shape[0]
    p = ones / total
    assert np.all(np.abs(p - 0.5) < 0.03)


def test_log_hausdorff_sum():
    s = PopulationState.from_digits(2, 3, [(1, 1, 1), (2, 1, 2)])
    assert log_hausdorff_sum(s, 0) == 2
    assert math.isclose(log_hausdorff_sum(s, 1), 2 / (3 * math.log(2)))
    with pytest.raises(ValueError):
        log_hausdorff_sum(s, -1)


def test_log_hausdorff_h1_tracks_martingale():
    c = simulate_counts(2, 0.0, [1000, 10000], 200, seed=11, total_until=0)
    for i, n in enumerate(c.gens):
        ratio = (c.xi_tilde[i] / (n * math.log(2))) / (c.m_tilde()[i] / math.log(2))
        assert np.all(np.abs(ratio - 1) < 0.02)


def test_energy_single_and_h0():
    prof = profile_for(0.0, 11, 2)
    w = prof.Rprime[10] / prof.R[10]
    s = PopulationState(2, 10, np.ones((1, 10), dtype=np.uint8))
    assert math.isclose(energy_estimate(s, 1.5, 0.0, prof), w * w * 10**1.5, rel_tol=1e-14)
    t = simulate_state(2, 0.0, 10, stream(2, "e"), prof)
    assert math.isclose(energy_estimate(t, 0.0, 0.0, prof),
                        martingale_estimate(t, 0.0, prof) ** 2, rel_tol=1e-12)


@pytest.mark.parametrize("h", [0.5, 1.0, 1.5])
def test_energy_matches_bruteforce(h):
    prof = profile_for(0.0, 41, 2)
    rng = stream(3, "energy-bf")
    for _ in range(5):
        s = simulate_state(2, 0.0, 40, rng, prof)
        w = prof.Rprime[40] / prof.R[40]
        assert math.isclose(energy_estimate(s, h, 0.0, prof),
                            w * w * pair_energy_bruteforce(s, h), rel_tol=1e-12)


def test_energy_batch_matches_states_in_law():
    res = energy_batch(2, 0.0, [30], [1.0], 3000, seed=4)[(30, 1.0)]
    prof = profile_for(0.0, 31, 2)
    rng = stream(5, "energy-states")
    direct = np.array([energy_estimate(simulate_state(2, 0.0, 30, rng, prof), 1.0, 0.0, prof)
                       for _ in range(1500)])
    se = math.hypot(res.std() / math.sqrt(res.size), direct.std() / math.sqrt(direct.size))
    assert abs(res.mean() - direct.mean()) <= 3 * se


def test_energy_trends_small():
    res = energy_batch(2, 0.0, [25, 50, 100], [0.5, 1.5], 2000, seed=7)
    q15 = [res[(n, 1.5)].mean() for n in (25, 50, 100)]
    assert q15[0] < q15[1] < q15[2]
    inc = [res[(50, 0.5)].mean() - res[(25, 0.5)].mean(),
           res[(100, 0.5)].mean() - res[(50, 0.5)].mean()]
    inc15 = [q15[1] - q15[0], q15[2] - q15[1]]
    # increments shrink for h < 1 and grow for h > 1
    assert inc[1] < inc[0] and inc15[1] > inc15[0]


def test_chunking_determinism():
    a = simulate_counts(2, 0.0, [10, 30], 5000, seed=8)
    b = simulate_counts(2, 0.0, [10, 30], 5000, seed=8)
    assert np.array_equal(a.xi_tilde, b.xi_tilde) and np.array_equal(a.xi_total, b.xi_total)
