"""Birth-death hitting times and the voter ones-count rate profile.

The ones count of a pure voter run is a +-1 chain whose jump rate at
ones-count j is twice the boundary size over k (each discordant unordered
edge flips either endpoint at rate 1/k, one flip raising and one lowering
the count, at equal rates).  ``expected_hitting_time`` evaluates the exact
absorption-time formula for such a chain with an arbitrary positive rate
profile; ``voter_rate_profile`` measures the empirical profile so the two
can be compared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._rng import as_rng, kernel_state
from .dynamics import QVoterParams
from .lattice import Configuration, TorusLattice

__all__ = [
    "RateFunction",
    "expected_hitting_time",
    "simulate_hitting",
    "HittingEstimate",
    "total_flip_rate",
    "voter_rate_profile",
    "RateProfile",
]


@dataclass(frozen=True)
class RateFunction:
    """Jump-rate profile r(j) > 0 on 1..z: constant, linear, power or table."""

    kind: str
    param: object = None

    @staticmethod
    def constant(c: float = 1.0) -> "RateFunction":
        return RateFunction("constant", float(c))

    @staticmethod
    def linear() -> "RateFunction":
        return RateFunction("linear")

    @staticmethod
    def power(p: float) -> "RateFunction":
        return RateFunction("power", float(p))

    @staticmethod
    def table(values) -> "RateFunction":
        return RateFunction("table", tuple(float(v) for v in values))

    @staticmethod
    def parse(spec) -> "RateFunction":
        """Accept 'constant', 'linear', 'power:<p>', a number, or an array."""
        if isinstance(spec, RateFunction):
            return spec
        if isinstance(spec, str):
            s = spec.strip().lower()
            if s == "linear":
                return RateFunction.linear()
            if s == "constant":
                return RateFunction.constant(1.0)
            if s.startswith("power:"):
                return RateFunction.power(float(s.split(":", 1)[1]))
            raise ValueError(f"unknown rate spec {spec!r}")
        if np.isscalar(spec):
            return RateFunction.constant(float(spec))
        return RateFunction.table(spec)

    def values(self, z: int) -> np.ndarray:
        """r(1..z) as a length z+1 array (index 0 unused, set to nan)."""
        j = np.arange(z + 1, dtype=np.float64)
        if self.kind == "constant":
            r = np.full(z + 1, float(self.param))
        elif self.kind == "linear":
            r = j.copy()
        elif self.kind == "power":
            with np.errstate(divide="ignore"):
                r = j**float(self.param)
        elif self.kind == "table":
            tab = np.asarray(self.param, dtype=np.float64)
            if len(tab) < z + 1:
                raise ValueError(f"table must cover 0..{z}")
            r = tab[: z + 1].copy()
        else:
            raise ValueError(f"unknown kind {self.kind!r}")
        if not (r[1:] > 0).all():
            raise ValueError("rates must be strictly positive on 1..z")
        r[0] = np.nan
        return r


def expected_hitting_time(x: int, z: int, rate) -> float:
    """Expected absorption time at {0, z} of the +-1 chain started at x with
    jump rate r(j):

        sum_{y=1..x} 2y/r(y) + sum_{y=x+1..z} 2x/r(y) - sum_{y=1..z} 2xy/(z r(y))
    """
    if not 0 < x < z:
        raise ValueError(f"need 0 < x < z, got x={x}, z={z}")
    r = RateFunction.parse(rate).values(z)
    y = np.arange(1, z + 1, dtype=np.float64)
    ry = r[1:]
    t1 = float((2.0 * y[: x] / ry[: x]).sum())
    t2 = float((2.0 * x / ry[x:]).sum())
    t3 = float((2.0 * x * y / (z * ry)).sum())
    return t1 + t2 - t3


@dataclass
class HittingEstimate:
    mean_time: float
    se_time: float
    frac_top: float
    se_top: float
    times: np.ndarray | None = None

    def to_csv(self, fh) -> None:
        own = isinstance(fh, (str, bytes))
        f = open(fh, "w") if own else fh
        try:
            f.write("replicate,time\n")
            for i, t in enumerate(self.times if self.times is not None else ()):
                f.write(f"{i},{t:.17g}\n")
        finally:
            if own:
                f.close()


def simulate_hitting(x: int, z: int, rate, replicates: int, rng,
                     keep_times: bool = False) -> HittingEstimate:
    """Monte Carlo absorption times and top-hit fraction of the same chain."""
    if not 0 < x < z:
        raise ValueError(f"need 0 < x < z, got x={x}, z={z}")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    rng = as_rng(rng)
    r = RateFunction.parse(rate).values(z)
    r[0] = 1.0  # unused; keep the kernel free of nans
    times = np.empty(replicates)
    hit = np.empty(replicates, dtype=np.uint8)
    s = kernel_state(rng)
    _kernels.birth_death_hitting(s[0], s[1], s[2], s[3], np.int64(x),
                                 np.int64(z), r, times, hit)
    p = float(hit.mean())
    return HittingEstimate(
        mean_time=float(times.mean()),
        se_time=float(times.std(ddof=1) / math.sqrt(replicates)),
        frac_top=p,
        se_top=math.sqrt(p * (1 - p) / replicates),
        times=times if keep_times else None,
    )


def total_flip_rate(config: Configuration, params: QVoterParams) -> float:
    """Sum of the per-site flip rates of the configuration."""
    tab = params.rate_table(config.lattice.k)
    disc = config.discordant_counts()
    return float(tab[disc].sum())


@dataclass
class RateProfile:
    """Empirical ones-count rate profile of pure-voter runs.

    ``mean_rate[j]`` is the time-weighted average total flip rate observed
    while the ones count equaled j (nan where j was never visited); ups and
    downs count +-1 transitions out of j.
    """

    time_at: np.ndarray
    rate_time: np.ndarray
    ups: np.ndarray
    downs: np.ndarray

    @property
    def mean_rate(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.time_at > 0, self.rate_time / self.time_at, np.nan)

    def merge(self, other: "RateProfile") -> "RateProfile":
        return RateProfile(self.time_at + other.time_at,
                           self.rate_time + other.rate_time,
                           self.ups + other.ups, self.downs + other.downs)


def voter_rate_profile(config: Configuration, t_max: float, rng,
                       stop_high: int | None = None):
    """Run the pure voter from ``config`` (mutated) for t_max, accumulating
    the rate profile.  The total flip rate of the voter equals 2|boundary|/k,
    which the accumulator tracks incrementally.

    With ``stop_high`` set, the run also stops when the ones count first
    reaches it; returns (profile, stop_time, final_ones).
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    lat = config.lattice
    if not lat.is_symmetric:
        raise ValueError("rate profile requires a symmetric neighborhood")
    rng = as_rng(rng)
    n = lat.n
    disc = config.discordant_counts().astype(np.int8)
    time_at = np.zeros(n + 1)
    rate_time = np.zeros(n + 1)
    ups = np.zeros(n + 1, dtype=np.int64)
    downs = np.zeros(n + 1, dtype=np.int64)
    active = np.empty(n, dtype=np.int32)
    apos = np.empty(n, dtype=np.int32)
    s = kernel_state(rng)
    t, ones, *_ = _kernels.voter_rate_profile_run(
        s[0], s[1], s[2], s[3], config.bits, disc, lat.nbr_in, float(t_max),
        np.int64(stop_high if stop_high is not None else n + 1),
        time_at, rate_time, ups, downs, active, apos)
    config.ones_count = int(ones)
    profile = RateProfile(time_at=time_at, rate_time=rate_time, ups=ups,
                          downs=downs)
    if stop_high is None:
        return profile
    return profile, float(t), int(ones)
