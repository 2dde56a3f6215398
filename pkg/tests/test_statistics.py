import math

import numpy as np
import pytest

from qvoter._rng import replica_rng
from qvoter.dynamics import QVoterParams, set_product_measure
from qvoter.lattice import Configuration, E3_OFFSETS, NN6_OFFSETS, build_torus
from qvoter.statistics import (
    adjacent_noncoalescence,
    boundary_ratio_low_density,
    boundary_stats,
    box_sums,
    easy_boundary_bounds,
    extinction_ensemble,
    moment_ratio,
    poisson_tail,
    variance_exponent,
    write_boundary_series,
)


def test_box_sums_all_ones_closed_form(lat8):
    c = Configuration(lat8, np.ones(lat8.n, dtype=np.uint8))
    for r in (2, 4, 8):
        s = box_sums(c, r, 0.5)
        # [1/4]^{-1/2} r^{-5/2} * r^3/2 = sqrt(r)
        assert np.allclose(s.values, math.sqrt(r))
        assert len(s.values) == (lat8.side // r) ** 3


def test_box_sums_partition_identity(lat8, rng):
    bits = (rng.random(lat8.n) < 0.37).astype(np.uint8)
    c = Configuration(lat8, bits)
    lam = 0.4
    s = box_sums(c, 4, lam)
    total = s.unnormalized().sum()
    assert total == pytest.approx(c.ones_count - lam * lat8.n, abs=1e-8)


def test_box_sums_product_measure_variance(rng):
    lat = build_torus(16, NN6_OFFSETS)
    lam = 0.5
    vals = []
    for i in range(30):
        c = Configuration(lat)
        set_product_measure(c, lam, replica_rng(55, i))
        vals.append(box_sums(c, 4, lam).values)
    v = np.concatenate(vals)
    # normalized variance ~ r^{-2} for independent sites
    assert np.mean(v) == pytest.approx(0.0, abs=4 * v.std() / math.sqrt(len(v)))
    assert np.var(v) == pytest.approx(4 ** -2, rel=0.15)


def test_box_sums_validation(lat8, rng):
    c = Configuration(lat8)
    with pytest.raises(ValueError):
        box_sums(c, 3, 0.5)
    with pytest.raises(ValueError):
        box_sums(c, 4, 0.0)
    with pytest.raises(ValueError):
        box_sums(c, 4, 1.0)


def test_variance_exponent_product_measure_slope_three():
    lat = build_torus(32, NN6_OFFSETS)
    samples = []
    for i in range(6):
        c = Configuration(lat)
        set_product_measure(c, 0.5, replica_rng(66, i))
        samples.extend(box_sums(c, r, 0.5) for r in (2, 4, 8))
    slope, se, variances = variance_exponent(samples)
    assert 2.7 < slope < 3.3
    assert sorted(variances) == [2, 4, 8]


def test_variance_exponent_requires_three_scales(lat8, rng):
    c = Configuration(lat8)
    set_product_measure(c, 0.5, rng)
    with pytest.raises(ValueError):
        variance_exponent([box_sums(c, 2, 0.5), box_sums(c, 4, 0.5)])


def test_variance_exponent_degenerate_config(lat8):
    c = Configuration(lat8, np.ones(lat8.n, dtype=np.uint8))
    with pytest.raises(ValueError, match="degenerate"):
        variance_exponent([box_sums(c, r, 0.5) for r in (2, 4, 8)])


def test_boundary_examples(lat8):
    ones = Configuration(lat8, np.ones(lat8.n, dtype=np.uint8))
    assert boundary_stats(ones).size == 0
    single = Configuration(lat8)
    single.set(0, 1)
    bs = boundary_stats(single)
    assert bs.size == 6 and bs.ones == 1 and bs.ratio == 6.0


def test_boundary_requires_symmetric_neighborhood(lat4_e3):
    with pytest.raises(ValueError):
        boundary_stats(Configuration(lat4_e3))


def test_boundary_bounds_fuzz(lat4):
    rng = np.random.default_rng(99)
    n, k = lat4.n, lat4.k
    for _ in range(10_000):
        bits = (rng.random(n) < rng.uniform(0.05, 0.95)).astype(np.uint8)
        c = Configuration(lat4, bits)
        bs = boundary_stats(c)
        lower, upper = easy_boundary_bounds(bs.ones, n, k)
        assert bs.size <= upper


def test_boundary_lower_bound_nonwrapping(lat8):
    # sparse configurations have no full line, so the lower bound applies
    rng = np.random.default_rng(7)
    for _ in range(300):
        bits = (rng.random(lat8.n) < 0.2).astype(np.uint8)
        c = Configuration(lat8, bits)
        bs = boundary_stats(c)
        lower, _ = easy_boundary_bounds(bs.ones, lat8.n, lat8.k)
        assert bs.size >= lower
    # deterministic shapes
    c = Configuration(lat8)
    for s in range(8):
        c.set(s, 1)  # a line segment of 8 sites wraps; use 7 instead
    c.set(7, 0)
    bs = boundary_stats(c)
    lower, upper = easy_boundary_bounds(bs.ones, lat8.n, lat8.k)
    assert lower <= bs.size <= upper


def test_write_boundary_series(lat8, rng):
    import io

    c = Configuration(lat8)
    set_product_measure(c, 0.3, rng)
    stats = [boundary_stats(c)]
    c.set(0, 1 - c.get(0))
    stats.append(boundary_stats(c))
    buf = io.StringIO()
    write_boundary_series(buf, [0.0, 1.0], stats)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "time,boundary,ones,ratio"
    assert len(lines) == 3
    assert lines[1].split(",")[1] == str(stats[0].size)


def test_extinction_zero_start(lat4):
    ens = extinction_ensemble(lat4, QVoterParams.direct(1.1), 0.0, 5,
                              master_seed=1)
    assert np.all(ens.times == 0.0)
    assert not ens.censored.any()


def test_extinction_clustering_regime_absorbs_at_zero(lat8):
    ens = extinction_ensemble(lat8, QVoterParams.direct(1.1), 0.2, 10,
                              master_seed=5)
    assert not ens.censored.any()
    assert not ens.fixated_at_one.any()
    assert np.all(ens.times > 0)
    assert ens.t_max == 50.0 * lat8.n


def test_poisson_tail_values():
    gamma2 = 2 * math.log(2) - 1
    assert poisson_tail(10) == pytest.approx(math.exp(-10 * gamma2))
    assert poisson_tail(10) == pytest.approx(0.0210, abs=5e-4)
    assert poisson_tail(1e-9) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        poisson_tail(0.0)


def test_poisson_tail_empirical_small():
    rng = np.random.default_rng(12)
    lam = 5.0
    draws = rng.poisson(lam, size=200_000)
    assert np.mean(draws >= 2 * lam) <= poisson_tail(lam)


def test_moment_ratio_gaussian():
    rng = np.random.default_rng(8)
    ratio, se = moment_ratio(rng.normal(size=200_000))
    assert ratio == pytest.approx(3.0, abs=5 * max(se, 0.02))


def test_boundary_ratio_plateau(lat8):
    mean, se, ratios = boundary_ratio_low_density(lat8, 0.08, 12,
                                                  master_seed=31)
    assert 0 < mean < 6.0  # ratio bounded by the degree
    assert np.std(ratios, ddof=1) / mean < 0.35  # concentrates


def test_adjacent_noncoalescence_matches_classical_value(rng):
    # two adjacent walkers escape with probability 1 - (3d return prob)
    # ~ 0.659; the finite horizon biases the estimate slightly upward
    p, se = adjacent_noncoalescence(NN6_OFFSETS, horizon=2000.0,
                                    replicates=30_000, rng=rng)
    assert 0.62 < p < 0.70
    assert se < 0.01
