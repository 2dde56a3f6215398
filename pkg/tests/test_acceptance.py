"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s -m acceptance` to see the lines
as they complete.  Every tolerance is pinned here; the statistical checks
use fixed seeds so the suite is deterministic.  Budgeted criteria print
their wall-clock time.
"""

import hashlib
import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from qvoter._rng import replica_rng
from qvoter.duality import build_graphical_rep, check_duality, dual_crw, \
    forward_state, gadget_flip_rates
from qvoter.dynamics import QVoterParams, run, set_product_measure
from qvoter.equilibrium import FateDistribution, coalescence_fates, \
    empirical_drift, sample_nu_u
from qvoter.experiments import band_occupancy, run_experiment
from qvoter.greens import RateFunction, expected_hitting_time, simulate_hitting
from qvoter.lattice import Configuration, E3_OFFSETS, NN6_OFFSETS, build_torus
from qvoter.reaction import CUBIC, UPolynomial, check_rate_inequalities, \
    delta_ab, fate_signatures, perturbation_rates, phi_from_fates, \
    phi_k3_explicit, signature_group_coefficients
from qvoter.statistics import box_sums, extinction_ensemble, poisson_tail, \
    variance_exponent

pytestmark = pytest.mark.acceptance

SEED = 20260810


def _report(num, desc, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    print(f"\n[acceptance {num:02d}] {desc}: {status}  {detail}")
    assert passed, f"criterion {num} ({desc}): {detail}"


def test_c01_duality_identity():
    t_start = time.monotonic()
    lat = build_torus(3, NN6_OFFSETS)
    cases = [
        ([0], [13], 0.5),
        ([0, 1, 2], [13, 20], 1.0),
        ([0, 9], [4, 17, 22], 2.0),
    ]
    reps = 100_000
    details = []
    ok = True
    for i, (A, B, t) in enumerate(cases):
        est = check_duality(lat, A, B, t, reps, replica_rng(SEED, i))
        ratio = est.gap / (3 * (est.se_forward + est.se_dual))
        ok &= est.gap <= 3 * (est.se_forward + est.se_dual)
        details.append(f"t={t}: |{est.p_forward:.4f}-{est.p_dual:.4f}|"
                       f"={est.gap:.4f} vs 3(se1+se2)="
                       f"{3 * (est.se_forward + est.se_dual):.4f}")
    wall = time.monotonic() - t_start
    ok &= wall < 120.0
    _report(1, "two-sided duality identity (1e5 reps/side)", ok,
            "; ".join(details) + f"; {wall:.0f}s (<120s)")


def test_c02_pathwise_duality():
    lat = build_torus(3, NN6_OFFSETS)
    failures = 0
    checked = 0
    for i in range(100):
        rng = replica_rng(SEED + 1, i)
        rep = build_graphical_rep(lat, T=1.0, epsilon=0.0, rng=rng)
        xi0 = Configuration(lat)
        set_product_measure(xi0, 0.4, rng)
        xiT = forward_state(rep, xi0)
        for x in range(lat.n):
            d = dual_crw(rep, [x])
            failures += int(xiT.bits[x] != xi0.bits[d.position_of(x)])
            checked += 1
    _report(2, "pathwise duality, 100 representations", failures == 0,
            f"{checked} site checks, {failures} mismatches")


def _synthetic_rational_fates(k):
    sigs = fate_signatures(k)
    weights = [Fraction(i + 1) for i in range(len(sigs))]
    total = sum(weights)

    class Synth:
        pass

    fd = Synth()
    fd.k = k
    fd.probabilities = {sig: w / total for sig, w in zip(sigs, weights)}
    return fd


def test_c03_reaction_factorization():
    ok = True
    details = []
    for k in range(3, 9):
        fd = _synthetic_rational_fates(k)
        rates = perturbation_rates(k, "q<1")
        term = phi_from_fates(fd, rates)
        quot, rem = term.phi.divmod_by(CUBIC)
        exact_div = rem.is_zero and term.phi.is_exact
        ends = term.f_k(Fraction(0)) == 1 and term.f_k(Fraction(1)) == 1
        positive = term.check_positivity(1000)
        ok &= exact_div and ends and positive
        details.append(f"k={k}: rem=0 {exact_div}, f(0)=f(1)=1 {ends}, "
                       f"f>0 {positive}")
    # closed form agreement at k=3
    fd3 = _synthetic_rational_fates(3)
    rates3 = perturbation_rates(3, "q<1")
    general = phi_from_fates(fd3, rates3)
    closed = phi_k3_explicit(fd3.probabilities, rates3)
    agree = general.phi == closed.phi
    ok &= agree
    _report(3, "exact reaction-term factorization, k=3..8", ok,
            "; ".join(details) + f"; k=3 closed form agrees: {agree}")


def test_c04_rate_inequality_surrogate():
    ok = True
    total_groups = 0
    for k in range(3, 9):
        rates = perturbation_rates(k, "q<1")
        rvals = [float(v) for v in rates.as_array()]
        for s0, sizes in fate_signatures(k):
            total_groups += len(signature_group_coefficients(sizes, rvals))
        violations = check_rate_inequalities(k, rates)
        ok &= violations == []
    _report(4, "grouped rate inequality, exhaustive k<=8", ok,
            f"{total_groups} groups checked, zero violations: {ok}")


def test_c05_monte_carlo_drift_agreement():
    t_start = time.monotonic()
    k = 3
    L = 20
    burn = float(L * L)
    reps_fates = 1_000_000
    reps_drift = 48
    rates = perturbation_rates(k, "q<1")
    rvals = [float(v) for v in rates.as_array()]
    lat = build_torus(L, E3_OFFSETS)

    fates_ref = coalescence_fates(k, E3_OFFSETS, 1.0e4, reps_fates,
                                  replica_rng(SEED + 5, 0))
    fates_burn = coalescence_fates(k, E3_OFFSETS, burn, reps_fates,
                                   replica_rng(SEED + 5, 1))
    fates_torus = coalescence_fates(k, E3_OFFSETS, burn, reps_fates,
                                    replica_rng(SEED + 5, 2), lattice=lat)

    def predictor(fd):
        def f(u):
            m1 = m2 = 0.0
            for sig, p in fd.probabilities.items():
                sizes = sig.cluster_sizes
                j = len(sizes)
                w = 0.0
                for c, y, x in signature_group_coefficients(sizes, rvals):
                    poly, _ = delta_ab(c, j - c)
                    w += (y - x) * float(poly(u))
                m1 += p * w
                m2 += p * w * w
            return m1, math.sqrt(max(m2 - m1 * m1, 0.0) / fd.count)
        return f

    pred_ref = predictor(fates_ref)
    pred_burn = predictor(fates_burn)
    pred_torus = predictor(fates_torus)

    ok = True
    details = []
    for u in (0.2, 0.5, 0.8):
        emps = []
        for i in range(reps_drift):
            rng = replica_rng(SEED + 6, 1000 * int(10 * u) + i)
            cfg = sample_nu_u(lat, u, burn, rng)
            emps.append(empirical_drift(cfg, rates))
        emps = np.array(emps)
        se_emp = emps.std(ddof=1) / math.sqrt(reps_drift)
        mean = emps.mean()
        phi_ref, se_ref = pred_ref(u)
        phi_t, se_t = pred_torus(u)
        phi_b, _ = pred_burn(u)
        # the criterion's comparison: phi from the reference fates
        gap_ref = abs(mean - phi_ref)
        comb_ref = math.hypot(se_emp, se_ref)
        # matched-scale exact identity: torus duals truncated at the burn
        gap_t = abs(mean - phi_t)
        comb_t = math.hypot(se_emp, se_t)
        ok &= gap_ref <= 3 * comb_ref
        ok &= gap_t <= 3 * comb_t
        details.append(
            f"u={u}: drift {mean:+.5f} vs phi {phi_ref:+.5f} "
            f"({gap_ref / comb_ref:.2f}sig); matched-scale "
            f"({gap_t / comb_t:.2f}sig); tail {phi_b - phi_ref:+.5f}, "
            f"wrap {phi_t - phi_b:+.5f}")
    wall = time.monotonic() - t_start
    ok &= wall < 600.0
    _report(5, "Monte Carlo drift agreement (1e6 fates, L=20)", ok,
            "; ".join(details) + f"; {wall:.0f}s (<600s)")


def test_c06_greens_function():
    # oracle: 20*(H_100 - H_10) summed exactly over rationals
    oracle = 45.168185273427326
    val = expected_hitting_time(10, 100, RateFunction.linear())
    rel = abs(val - oracle) / oracle
    est = simulate_hitting(10, 100, "linear", 100_000, replica_rng(SEED + 7, 0))
    sim_ok = abs(est.mean_time - val) <= 3 * est.se_time
    frac_ok = abs(est.frac_top - 0.1) <= 3 * est.se_top
    ok = rel <= 1e-9 and sim_ok and frac_ok
    _report(6, "hitting-time formula vs oracle and simulation", ok,
            f"exact {val:.9f} vs oracle (rel {rel:.2e}); sim "
            f"{est.mean_time:.3f}+/-{est.se_time:.3f}; P(top) "
            f"{est.frac_top:.4f} vs 0.1")


def test_c07_box_sum_scaling():
    t_start = time.monotonic()
    L = 64
    lat = build_torus(L, NN6_OFFSETS)
    rs = (4, 8, 16)
    equil, control = [], []
    for i in range(3):
        rng = replica_rng(SEED + 8, i)
        cfg = sample_nu_u(lat, 0.5, None, rng)  # burn L^2
        lam = min(max(cfg.density, 1e-9), 1 - 1e-9)
        equil.extend(box_sums(cfg, r, lam) for r in rs)
        set_product_measure(cfg, 0.5, rng)
        control.extend(box_sums(cfg, r, 0.5) for r in rs)
    slope, se, _ = variance_exponent(equil)
    cslope, cse, _ = variance_exponent(control)
    wall = time.monotonic() - t_start
    ok = 4.3 <= slope <= 5.7 and 2.7 <= cslope <= 3.3 and wall < 900.0
    _report(7, "box-sum variance scaling on L=64", ok,
            f"equilibrated slope {slope:.2f}+/-{se:.2f} in [4.3,5.7]; "
            f"product control {cslope:.2f}+/-{cse:.2f} in [2.7,3.3]; "
            f"{wall:.0f}s (<900s)")


def test_c08_persistence_analogue():
    t_start = time.monotonic()
    params = QVoterParams.direct(0.9)
    u0, band, t_max, reps = 0.25, 0.1, 1000.0, 20
    occupancy = {}
    for L in (16, 20, 26):
        lat = build_torus(L, NN6_OFFSETS)
        occs = []
        for i in range(reps):
            rng = replica_rng(SEED + 9, (L << 20) + i)
            cfg = Configuration(lat)
            set_product_measure(cfg, u0, rng)
            traj = run(cfg, params, t_max, rng, sample_dt=1.0, keep_final=False)
            _, occ = band_occupancy(traj.times, traj.densities, band)
            occs.append(occ)
        occupancy[L] = float(np.mean(occs))
    wall = time.monotonic() - t_start
    monotone = occupancy[16] <= occupancy[20] <= occupancy[26]
    ok = monotone and occupancy[26] > 0.9 and wall < 1200.0
    _report(8, "persistence trend, q=0.9, L in {16,20,26}", ok,
            f"mean occupancy {occupancy[16]:.4f} <= {occupancy[20]:.4f} "
            f"<= {occupancy[26]:.4f}; L=26 > 0.9; {wall:.0f}s (<1200s)")


def test_c09_extinction_analogue():
    params = QVoterParams.direct(1.1)
    u0, reps = 0.25, 20
    ok = True
    details = []
    for L in (16, 20, 26):
        lat = build_torus(L, NN6_OFFSETS)
        ens = extinction_ensemble(lat, params, u0, reps,
                                  master_seed=SEED + 10 + L)
        absorbed = int((~ens.censored).sum())
        at_one = int(ens.fixated_at_one.sum())
        ok &= absorbed == reps and at_one == 0
        details.append(f"L={L}: {absorbed}/{reps} absorbed at 0, "
                       f"{at_one} at 1, mean t {ens.times.mean():.0f}")
    _report(9, "extinction, q=1.1: all absorb at zero", ok, "; ".join(details))


def test_c10_martingale_and_poisson_tail():
    # pure-voter martingale
    u0, R, t = 0.3, 200, 50.0
    lat = build_torus(16, NN6_OFFSETS)
    finals = []
    for i in range(R):
        rng = replica_rng(SEED + 11, i)
        cfg = Configuration(lat)
        set_product_measure(cfg, u0, rng)
        finals.append(run(cfg, QVoterParams.direct(1.0), t, rng,
                          sample_dt=t, keep_final=False).densities[-1])
    finals = np.array(finals)
    shat = finals.std(ddof=1)
    mart_gap = abs(finals.mean() - u0)
    mart_ok = mart_gap < 4 * shat / math.sqrt(R)
    # Poisson tail bound
    rng = replica_rng(SEED + 12, 0)
    pois_details = []
    pois_ok = True
    for lam in (5.0, 10.0, 20.0):
        draws = rng.poisson(lam, size=1_000_000)
        emp = float(np.mean(draws >= 2 * lam))
        bound = poisson_tail(lam)
        pois_ok &= emp <= bound
        pois_details.append(f"lam={lam:g}: {emp:.5f} <= {bound:.5f}")
    ok = mart_ok and pois_ok
    _report(10, "voter martingale + Poisson tail bound", ok,
            f"|mean-{u0}|={mart_gap:.5f} < {4 * shat / math.sqrt(R):.5f}; "
            + "; ".join(pois_details))


# published gadget table coefficients (rows m=0..4; columns a1..a4)
GADGET_10 = [(0, 0, 0, 0), (1, 0, 0, 0), (2, 1, 0, 0), (3, 3, 1, 0),
             (4, 6, 4, 1)]
GADGET_01 = [(0, 0, 0, 0), (1, 3, 3, 1), (2, 5, 4, 1), (3, 6, 4, 1),
             (4, 6, 4, 1)]


def test_c11_gadget_table():
    ok = True
    # the ten table entries, reproduced as exact linear forms
    for basis in range(4):
        a = [0] * 4
        a[basis] = 1
        table = gadget_flip_rates(a)
        for m in range(5):
            ok &= table.rows[m][0] == GADGET_10[m][basis]
            ok &= table.rows[m][1] == GADGET_01[m][basis]
    # asymmetry flag exactly when a2+a3+a4 > 0
    flag_ok = True
    cases = [((1, 0, 0, 0), False), ((0.5, 0, 0, 0), False),
             ((0, 1, 0, 0), True), ((0, 0, 1, 0), True),
             ((0, 0, 0, 1), True), ((1, 0.2, 0, 0), True),
             ((2, 0, 0, 0.1), True), ((0, 0, 0, 0), False)]
    for a, expected in cases:
        flag_ok &= gadget_flip_rates(a).asymmetric == expected
    ok &= flag_ok
    _report(11, "gadget rate table and asymmetry flag", ok,
            f"10 entries verbatim: {ok}; flag matches a2+a3+a4>0: {flag_ok}")


def _digest_dir(path):
    out = {}
    for name in sorted(os.listdir(path)):
        if name == "run_info.txt":  # wall clock lives here by design
            continue
        with open(os.path.join(path, name), "rb") as f:
            out[name] = hashlib.sha256(f.read()).hexdigest()
    return out


def test_c12_byte_reproducibility(tmp_path):
    configs = [
        {"experiment": "persistence", "L": [8], "q": 0.9, "u0": 0.25,
         "t_max": 30.0, "replicates": 6, "seed": SEED},
        {"experiment": "box-clt", "L": 8, "r_values": [1, 2, 4], "u0": 0.5,
         "replicates": 2, "burn_time": 5.0, "seed": SEED},
    ]
    ok = True
    details = []
    for j, base in enumerate(configs):
        digests = []
        for run_i, threads in enumerate((1, 4, 1)):
            out = tmp_path / f"k{j}r{run_i}"
            run_experiment({**base, "out": str(out), "threads": threads})
            digests.append(_digest_dir(out))
        same = digests[0] == digests[1] == digests[2]
        ok &= same
        details.append(f"{base['experiment']}: {len(digests[0])} files, "
                       f"identical across runs/threads: {same}")
    _report(12, "byte-reproducibility of experiment outputs", ok,
            "; ".join(details))
