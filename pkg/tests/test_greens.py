import math

import numpy as np
import pytest

from qvoter._rng import replica_rng
from qvoter.greens import (
    RateFunction,
    expected_hitting_time,
    simulate_hitting,
    total_flip_rate,
    voter_rate_profile,
)
from qvoter.dynamics import QVoterParams
from qvoter.lattice import Configuration, NN6_OFFSETS, build_torus


# -- independent oracle: visit-count (Green function) summation --------------
# E_x T = sum_y G0(x,y)/r(y) with G0(x,y) = 2x(z-y)/z for x<=y and
# 2(z-x)y/z for x>=y; an independent route to the same expectation.

def green_sum_oracle(x, z, rvec):
    total = 0.0
    for y in range(1, z + 1):
        g0 = 2.0 * x * (z - y) / z if x <= y else 2.0 * (z - x) * y / z
        total += g0 / rvec[y]
    return total


def test_constant_rate_closed_form():
    for x, z in ((10, 100), (1, 7), (99, 100)):
        assert expected_hitting_time(x, z, RateFunction.constant(1.0)) == \
            pytest.approx(x * (z - x), rel=1e-12)


def test_near_boundary_value():
    z = 50
    assert expected_hitting_time(z - 1, z, "constant") == pytest.approx(z - 1.0)


def test_linear_rate_against_green_oracle():
    rvec = RateFunction.linear().values(100)
    v = expected_hitting_time(10, 100, "linear")
    assert v == pytest.approx(green_sum_oracle(10, 100, rvec), rel=1e-12)


def test_green_oracle_identity_random_tables():
    rng = np.random.default_rng(4)
    for _ in range(25):
        z = int(rng.integers(5, 60))
        x = int(rng.integers(1, z))
        table = rng.uniform(0.2, 5.0, size=z + 1)
        v = expected_hitting_time(x, z, RateFunction.table(table))
        assert v == pytest.approx(green_sum_oracle(x, z, table), rel=1e-9)


def test_monotone_in_rates():
    rng = np.random.default_rng(9)
    for _ in range(20):
        z = int(rng.integers(5, 40))
        x = int(rng.integers(1, z))
        base = rng.uniform(0.5, 2.0, size=z + 1)
        bigger = base * rng.uniform(1.0, 3.0, size=z + 1)
        assert expected_hitting_time(x, z, RateFunction.table(bigger)) <= \
            expected_hitting_time(x, z, RateFunction.table(base)) + 1e-12


def test_reflection_symmetry():
    rng = np.random.default_rng(14)
    z = 30
    table = rng.uniform(0.5, 3.0, size=z + 1)
    reflected = table.copy()
    reflected[1:z] = table[z - 1:0:-1]
    for x in range(1, z):
        a = expected_hitting_time(x, z, RateFunction.table(table))
        b = expected_hitting_time(z - x, z, RateFunction.table(reflected))
        assert a == pytest.approx(b, rel=1e-10)


def test_argument_validation():
    with pytest.raises(ValueError):
        expected_hitting_time(0, 10, "constant")
    with pytest.raises(ValueError):
        expected_hitting_time(10, 10, "constant")
    with pytest.raises(ValueError):
        RateFunction.table([1.0, 0.0, 1.0]).values(2)
    with pytest.raises(ValueError):
        RateFunction.parse("cubic")


def test_simulation_agrees_with_formula(rng):
    x, z, reps = 10, 100, 30_000
    est = simulate_hitting(x, z, "linear", reps, rng)
    exact = expected_hitting_time(x, z, "linear")
    assert abs(est.mean_time - exact) < 3 * est.se_time
    assert abs(est.frac_top - x / z) < 3 * est.se_top


def test_simulation_near_top(rng):
    x, z = 49, 50
    est = simulate_hitting(x, z, "constant", 20_000, rng)
    assert abs(est.frac_top - x / z) < 3 * max(est.se_top, 1e-4)


def test_total_flip_rate_single_one(lat8):
    c = Configuration(lat8)
    c.set(0, 1)
    # the 1 flips at rate 1; its six neighbors at rate 1/6 each
    assert total_flip_rate(c, QVoterParams.direct(1.0)) == pytest.approx(2.0)
    # under q=2 the neighbors flip at (1/6)^2
    assert total_flip_rate(c, QVoterParams.direct(2.0)) == \
        pytest.approx(1.0 + 6 * (1 / 6) ** 2)


def test_total_rate_equals_boundary_relation(lat8, rng):
    # pure voter: total flip rate = 2 |boundary| / k, exactly
    from qvoter.statistics import boundary_stats
    from qvoter.dynamics import set_product_measure

    params = QVoterParams.direct(1.0)
    for _ in range(20):
        c = Configuration(lat8)
        set_product_measure(c, rng.uniform(0.1, 0.9), rng)
        assert total_flip_rate(c, params) == pytest.approx(
            2.0 * boundary_stats(c).size / lat8.k, rel=1e-12)


def test_rate_profile_single_one_state(lat4):
    # while the ones count is 1 the configuration is an isolated 1, whose
    # total flip rate is exactly 2
    c = Configuration(lat4)
    c.set(0, 1)
    prof = voter_rate_profile(c, 3.0, replica_rng(2, 0))
    assert prof.time_at[1] > 0
    assert prof.mean_rate[1] == pytest.approx(2.0, rel=1e-9)


def test_rate_profile_up_down_balance(lat8):
    # voter ones-count moves are +-1 with equal rates: pooled counts agree
    ups = downs = 0
    for i in range(10):
        rng = replica_rng(44, i)
        c = Configuration(lat8)
        from qvoter.dynamics import set_product_measure
        set_product_measure(c, 0.5, rng)
        prof = voter_rate_profile(c, 10.0, rng)
        ups += prof.ups.sum()
        downs += prof.downs.sum()
    total = ups + downs
    assert abs(ups - downs) < 4 * math.sqrt(total)


def test_rate_profile_requires_symmetric(lat4_e3):
    with pytest.raises(ValueError):
        voter_rate_profile(Configuration(lat4_e3), 1.0, replica_rng(0, 0))


@pytest.mark.slow
def test_voter_absorption_time_consistent_with_formula(lat8):
    # cross-check: measure the empirical rate profile, predict the absorption
    # time of the ones count from the hitting-time formula, compare to the
    # simulated voter.  The ones count is not Markov, so this is a
    # consistency check with a generous band, sharpest at low density.
    x0, z = 24, 150
    n = lat8.n

    # measurement runs for the profile
    pooled = None
    for i in range(30):
        rng = replica_rng(81, i)
        c = Configuration(lat8)
        sites = rng.choice(n, size=x0, replace=False)
        c.bits[sites] = 1
        c.ones_count = x0
        out = voter_rate_profile(c, 2000.0, rng, stop_high=z)
        pooled = out[0] if pooled is None else pooled.merge(out[0])
    rates = pooled.mean_rate
    # fill unvisited states by linear interpolation over visited ones
    visited = np.nonzero(pooled.time_at[1:z] > 0)[0] + 1
    table = np.interp(np.arange(z + 1), visited, rates[visited])
    table[table <= 0] = table[table > 0].min()
    predicted = expected_hitting_time(x0, z, RateFunction.table(table))

    times = []
    for i in range(40):
        rng = replica_rng(82, i)
        c = Configuration(lat8)
        sites = rng.choice(n, size=x0, replace=False)
        c.bits[sites] = 1
        c.ones_count = x0
        _, t, ones = voter_rate_profile(c, 50.0 * n, rng, stop_high=z)
        times.append(t)
    mean = float(np.mean(times))
    se = float(np.std(times, ddof=1) / math.sqrt(len(times)))
    assert abs(mean - predicted) < max(4 * se, 0.3 * predicted), \
        (mean, predicted, se)
