"""Voter-equilibrium sampling and coalescence-fate estimation.

``sample_nu_u`` produces finite-torus proxies of the voter equilibrium at
density u by running the pure voter from product measure for a diffusive
burn time (default L**2: long enough to equilibrate local statistics, far
below the O(n) global fixation scale).

``coalescence_fates`` estimates, by Monte Carlo on the *unbounded* lattice,
the probabilities of the coalescence fates of walkers started at the origin
and its k neighborhood offsets: s0 of the neighbors merge with the origin's
walker and the rest form clusters of recorded sizes.  These probabilities
are the coefficients from which the local statistics rho_m^i(u), and hence
the reaction term, are built exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from ._rng import as_rng, kernel_state
from .dynamics import QVoterParams, RateTable, run, set_product_measure
from .lattice import Configuration, TorusLattice
from .reaction import UPolynomial

__all__ = [
    "FateSignature",
    "FateDistribution",
    "sample_nu_u",
    "coalescence_fates",
    "truncation_check",
    "rho_polynomials",
    "rho_polynomials_one",
    "empirical_drift",
]


class FateSignature(NamedTuple):
    """(s0, cluster_sizes): s0 neighbors coalesce with the origin's walker,
    the remaining neighbors form clusters of the given ascending sizes."""

    s0: int
    cluster_sizes: tuple

    @staticmethod
    def make(s0: int, sizes) -> "FateSignature":
        sizes = tuple(sorted(int(s) for s in sizes))
        sig = FateSignature(int(s0), sizes)
        if any(s < 1 for s in sizes):
            raise ValueError("cluster sizes must be >= 1")
        return sig

    @property
    def total(self) -> int:
        return self.s0 + sum(self.cluster_sizes)

    def __str__(self) -> str:
        return f"{self.s0};{','.join(map(str, self.cluster_sizes))}"

    @staticmethod
    def parse(s: str) -> "FateSignature":
        head, _, tail = s.partition(";")
        sizes = [int(v) for v in tail.split(",") if v.strip()] if tail else []
        return FateSignature.make(int(head), sizes)


@dataclass
class FateDistribution:
    """Empirical fate probabilities with binomial standard errors."""

    k: int
    probabilities: dict
    stderrs: dict
    count: int
    t_trunc: float

    def __post_init__(self):
        for sig in self.probabilities:
            if sig.total != self.k:
                raise ValueError(f"signature {sig} does not sum to k={self.k}")

    def probability(self, sig) -> float:
        if not isinstance(sig, FateSignature):
            sig = FateSignature.make(*sig) if not isinstance(sig, str) else FateSignature.parse(sig)
        return self.probabilities.get(sig, 0.0)

    def total_probability(self):
        return sum(self.probabilities.values())

    def to_csv(self, fh) -> None:
        own = isinstance(fh, (str, bytes))
        f = open(fh, "w") if own else fh
        try:
            f.write(f"# k={self.k} count={self.count} t_trunc={self.t_trunc:.17g}\n")
            f.write("signature,probability,stderr,count\n")
            for sig in sorted(self.probabilities):
                p = self.probabilities[sig]
                se = self.stderrs[sig]
                f.write(f"{sig},{float(p):.17g},{float(se):.17g},{round(float(p) * self.count)}\n")
        finally:
            if own:
                f.close()

    @staticmethod
    def from_csv(fh) -> "FateDistribution":
        own = isinstance(fh, (str, bytes))
        f = open(fh) if own else fh
        try:
            header = f.readline().strip()
            meta = dict(part.split("=", 1) for part in header.lstrip("# ").split())
            f.readline()  # column names
            probs, ses = {}, {}
            for line in f:
                if not line.strip():
                    continue
                sig_s, p, se, _ = _split_fate_row(line)
                sig = FateSignature.parse(sig_s)
                probs[sig] = float(p)
                ses[sig] = float(se)
        finally:
            if own:
                f.close()
        return FateDistribution(k=int(meta["k"]), probabilities=probs, stderrs=ses,
                                count=int(meta["count"]), t_trunc=float(meta["t_trunc"]))


def _split_fate_row(line: str):
    # signature itself contains commas; the last three fields are numeric
    parts = line.strip().split(",")
    return ",".join(parts[:-3]), parts[-3], parts[-2], parts[-1]


def sample_nu_u(lattice: TorusLattice, u: float, burn_time: float | None,
                rng) -> Configuration:
    """Pure-voter burn from product measure density u; a local proxy for the
    equilibrium at density u.  burn_time defaults to L**2."""
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie strictly inside (0,1); use set_product_measure "
                         "for the degenerate endpoints")
    rng = as_rng(rng)
    if burn_time is None:
        burn_time = float(lattice.side**2)
    config = Configuration(lattice)
    set_product_measure(config, u, rng)
    if burn_time > 0:
        run(config, QVoterParams.direct(1.0), burn_time, rng, sample_dt=burn_time)
    return config


def _pack_offsets(offsets) -> np.ndarray:
    out = np.empty(len(offsets), dtype=np.int64)
    for i, (x, y, z) in enumerate(offsets):
        out[i] = np.int64(int(x) + (int(y) << 21) + (int(z) << 42))
    return out


def coalescence_fates(k: int, offsets, t_trunc: float, replicates: int,
                      rng, lattice: TorusLattice | None = None) -> FateDistribution:
    """Monte Carlo fate distribution of k+1 coalescing rate-1 walks started
    at the origin and at each offset, truncated at t_trunc.

    By default the walks live on the unbounded lattice (no torus wrap),
    which is where the limiting fate constants are defined.  Passing a
    ``lattice`` runs them on that torus instead, for finite-size analysis
    (walkers then re-meet around the torus once t_trunc ~ L**2)."""
    offs = [tuple(int(c) for c in v) for v in offsets]
    if len(offs) != k:
        raise ValueError(f"need {k} offsets, got {len(offs)}")
    if len(set(offs)) != len(offs) or (0, 0, 0) in offs:
        raise ValueError("offsets must be distinct and nonzero")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if t_trunc < 0 or t_trunc > 1e7:
        raise ValueError("t_trunc must lie in [0, 1e7] (packed-coordinate range)")
    rng = as_rng(rng)
    nev = rng.poisson((k + 1) * float(t_trunc), size=replicates).astype(np.int64)
    sig_out = np.empty(replicates, dtype=np.int64)
    s0, s1, s2, s3 = kernel_state(rng)
    if lattice is None:
        deltas = _pack_offsets(offs)
        ddeltas = np.concatenate([deltas, -deltas])
        _kernels.coalescence_runs(rng, s0, s1, s2, s3, nev, k, deltas,
                                  ddeltas, sig_out)
    else:
        if not all(tuple(v) in {tuple(o) for o in offs}
                   for v in lattice.offsets.tolist()) or lattice.k != k:
            raise ValueError("lattice offsets must match the fate offsets")
        start = np.empty(k + 1, dtype=np.int64)
        start[0] = lattice.site_index(0, 0, 0)
        for j, (ox, oy, oz) in enumerate(offs):
            start[j + 1] = lattice.site_index(ox, oy, oz)
        _kernels.coalescence_runs_torus(rng, s0, s1, s2, s3, nev, start,
                                        lattice.nbr_out, sig_out)
    uniq, counts = np.unique(sig_out, return_counts=True)
    probs, ses = {}, {}
    R = replicates
    for code, c in zip(uniq.tolist(), counts.tolist()):
        s0_count = code >> 48
        sizes = []
        v = code & ((1 << 48) - 1)
        while v:
            sizes.append(v & 15)
            v >>= 4
        sig = FateSignature.make(s0_count, sizes)
        p = c / R
        probs[sig] = p
        ses[sig] = float(np.sqrt(p * (1.0 - p) / R))
    return FateDistribution(k=k, probabilities=probs, stderrs=ses,
                            count=R, t_trunc=float(t_trunc))


def truncation_check(k: int, offsets, t_trunc: float, replicates: int, rng,
                     factor: float = 2.0):
    """Compare fate estimates at t_trunc and factor*t_trunc; returns
    (dist_short, dist_long, worst_sigma) where worst_sigma is the largest
    probability shift in units of the combined standard error."""
    rng = as_rng(rng)
    short = coalescence_fates(k, offsets, t_trunc, replicates, rng)
    long_ = coalescence_fates(k, offsets, factor * t_trunc, replicates, rng)
    worst = 0.0
    for sig in set(short.probabilities) | set(long_.probabilities):
        dp = abs(short.probabilities.get(sig, 0.0) - long_.probabilities.get(sig, 0.0))
        se = np.hypot(short.stderrs.get(sig, 0.0), long_.stderrs.get(sig, 0.0))
        if se > 0:
            worst = max(worst, dp / se)
    return short, long_, worst


def rho_polynomials(fates: FateDistribution) -> dict:
    """rho_m^0(u) for m = 0..k: probability that, in equilibrium at density
    u, the origin is 0 with exactly m neighbors equal to 1.

    Built from the fates: the origin's cluster votes 0 (factor 1-u) and each
    remaining cluster independently votes 1 (factor u, contributing its size
    to m) or 0 (factor 1-u)."""
    total = fates.total_probability()
    if abs(float(total) - 1.0) > 1e-9:
        raise ValueError(f"fate probabilities sum to {float(total)}, not 1")
    k = fates.k
    one_minus_u = UPolynomial.from_uab(0, 1)
    q_m = {m: UPolynomial.zero() for m in range(k + 1)}
    for sig, p in fates.probabilities.items():
        if p == 0:
            continue
        sizes = sig.cluster_sizes
        j = len(sizes)
        for mask in range(1 << j):
            m = 0
            a = 0
            for i in range(j):
                if mask >> i & 1:
                    m += sizes[i]
                    a += 1
            q_m[m] = q_m[m] + UPolynomial.from_uab(a, j - a).scale(p)
    return {m: one_minus_u * q for m, q in q_m.items()}


def rho_polynomials_one(fates: FateDistribution) -> dict:
    """rho_m^1(u) via the swap rule rho_m^1(u) = u * q_m(1-u)."""
    rho0 = rho_polynomials(fates)
    u_poly = UPolynomial.from_uab(1, 0)
    out = {}
    for m, r0 in rho0.items():
        # r0 = (1-u) q_m(u)  =>  q_m = r0 / (1-u); reflect instead of divide
        q_m, rem = r0.divmod_by(UPolynomial.from_uab(0, 1))
        if not rem.is_zero and rem.l1_norm() > 1e-12:
            raise AssertionError("rho_m^0 not divisible by (1-u)")
        out[m] = u_poly * q_m.reflect()
    return out


def empirical_drift(config: Configuration, rates: RateTable) -> float:
    """Instantaneous perturbation drift of the density on a configuration:
    (1/n) * sum_x r[m(x)] * (+1 if xi(x)=0 else -1), with m(x) the number of
    disagreeing neighbors.  Its equilibrium average is the reaction term."""
    lat = config.lattice
    if rates.k != lat.k:
        raise ValueError("rate table k does not match the lattice")
    disc = config.discordant_counts()
    r = rates.as_array()[disc]
    sign = 1.0 - 2.0 * config.bits.astype(np.float64)
    return float(np.dot(r, sign) / lat.n)
