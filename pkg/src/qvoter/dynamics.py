"""Exact continuous-time simulation of the q-voter model.

Two parameterizations are supported:

* ``direct-q``: site x flips at rate ``f_x**q`` with f_x the fraction of
  disagreeing neighbors.
* ``perturbation``: site x flips at rate ``f_x + eps * r[m]`` where m is the
  number of disagreeing neighbors and r is a rate table with r[0] = 0.  The
  entries may be negative (clustering regimes), in which case construction
  validates that every attainable rate stays nonnegative.

Rates depend on the configuration only through the per-site discordance
count, so each mode reduces to a k+1 entry lookup table; the simulation is
rejection sampling from the active (discordant) set with per-site rate cap
``max(table)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._rng import as_rng, kernel_state
from .lattice import Configuration, TorusLattice

__all__ = [
    "RateTable",
    "QVoterParams",
    "Trajectory",
    "flip_rate",
    "run",
    "run_windowed_voter",
    "set_product_measure",
]


@dataclass(frozen=True)
class RateTable:
    """Perturbation rates r[0..k]; r[0] must vanish so that the unanimous
    configurations are absorbing."""

    k: int
    values: tuple

    def __post_init__(self):
        if len(self.values) != self.k + 1:
            raise ValueError(f"need k+1={self.k + 1} values, got {len(self.values)}")
        if self.values[0] != 0:
            raise ValueError("r[0] must be 0 (absorbing unanimous states)")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True)
class QVoterParams:
    """Flip-rate specification; build with :meth:`direct` or :meth:`perturbed`."""

    mode: str
    q: float | None = None
    epsilon: float = 0.0
    rates: RateTable | None = None

    @staticmethod
    def direct(q: float) -> "QVoterParams":
        if q <= 0:
            raise ValueError("q must be positive")
        return QVoterParams(mode="direct-q", q=float(q))

    @staticmethod
    def perturbed(epsilon: float, rates: RateTable) -> "QVoterParams":
        if epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        p = QVoterParams(mode="perturbation", epsilon=float(epsilon), rates=rates)
        p.rate_table(rates.k)  # validate nonnegativity now
        return p

    def rate_table(self, k: int) -> np.ndarray:
        """Per-discordance-count flip rates, length k+1."""
        m = np.arange(k + 1, dtype=np.float64)
        if self.mode == "direct-q":
            tab = (m / k) ** self.q
        elif self.mode == "perturbation":
            if self.rates is None or self.rates.k != k:
                raise ValueError(f"rate table for k={k} required")
            tab = m / k + self.epsilon * self.rates.as_array()
            bad = np.nonzero(tab < 0)[0]
            if bad.size:
                raise ValueError(
                    f"negative flip rate at discordance count(s) {bad.tolist()}; "
                    f"reduce epsilon"
                )
        else:
            raise ValueError(f"unknown mode {self.mode!r}")
        tab[0] = 0.0
        return tab

    def max_rate(self, k: int) -> float:
        return float(self.rate_table(k).max())


@dataclass
class Trajectory:
    """Sampled density path of one run, in particle-time units.

    ``event_counts[i]`` is the cumulative number of accepted flips up to
    ``times[i]``; ``events`` is the total over the whole run.
    """

    times: np.ndarray
    densities: np.ndarray
    events: int
    event_counts: np.ndarray | None = None
    final_config: Configuration | None = None
    absorbed_time: float = -1.0
    final_time: float = 0.0

    @property
    def absorbed(self) -> bool:
        return self.absorbed_time >= 0.0

    def to_csv(self, fh) -> None:
        own = isinstance(fh, (str, bytes))
        f = open(fh, "w") if own else fh
        try:
            f.write("time,density,events\n")
            ev = self.event_counts
            if ev is None:
                ev = np.full(len(self.times), self.events, dtype=np.int64)
            for t, d, e in zip(self.times, self.densities, ev):
                f.write(f"{t:.17g},{d:.17g},{int(e)}\n")
        finally:
            if own:
                f.close()


def flip_rate(config: Configuration, site: int, params: QVoterParams) -> float:
    """Instantaneous flip rate of ``site`` under ``params``."""
    lat = config.lattice
    if not 0 <= site < lat.n:
        raise IndexError(f"site {site} out of range")
    b = config.bits
    m = int((b[lat.nbr_out[site]] != b[site]).sum())
    return float(params.rate_table(lat.k)[m])


def set_product_measure(config: Configuration, u: float, rng) -> Configuration:
    """Resample the configuration as product measure with ones-density u."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u must lie in [0,1], got {u}")
    rng = as_rng(rng)
    bits = (rng.random(config.lattice.n) < u).astype(np.uint8)
    config.bits[:] = bits
    config.ones_count = int(bits.sum())
    return config


def _work_arrays(n: int):
    return (
        np.empty(n, dtype=np.int32),
        np.empty(n, dtype=np.int32),
    )


def run(config: Configuration, params: QVoterParams, t_max: float, rng,
        sample_dt: float | None = None, keep_final: bool = True) -> Trajectory:
    """Simulate the dynamics from ``config`` (mutated in place) up to t_max.

    The density is recorded on the grid 0, sample_dt, 2*sample_dt, ...; after
    absorption the density is constant and the remaining grid is filled with
    that value.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    if sample_dt is None:
        sample_dt = t_max / 200.0
    if sample_dt <= 0:
        raise ValueError("sample_dt must be positive")
    lat = config.lattice
    rng = as_rng(rng)
    tab = params.rate_table(lat.k)
    r_cap = float(tab.max())
    if r_cap == 0.0:
        r_cap = 1.0  # degenerate all-zero table: nothing ever flips
    nsamp = int(np.floor(t_max / sample_dt)) + 1
    dens = np.empty(nsamp, dtype=np.float64)
    ev_counts = np.empty(nsamp, dtype=np.int64)
    disc = config.discordant_counts().astype(np.int8)
    active, apos = _work_arrays(lat.n)
    s0, s1, s2, s3 = kernel_state(rng)
    events, t, absorbed_t, ones, *_ = _kernels.dynamics_run(
        s0, s1, s2, s3, config.bits, disc, lat.nbr_in, tab, r_cap,
        float(t_max), float(sample_dt), dens, ev_counts, active, apos,
    )
    config.ones_count = int(ones)
    times = np.arange(nsamp, dtype=np.float64) * sample_dt
    return Trajectory(
        times=times,
        densities=dens,
        events=int(events),
        event_counts=ev_counts,
        final_config=config if keep_final else None,
        absorbed_time=float(absorbed_t),
        final_time=float(t),
    )


def run_windowed_voter(config: Configuration, params: QVoterParams,
                       t_max: float, window: tuple[float, float], rng,
                       sample_dt: float | None = None):
    """Run two coupled copies on one shared attempt stream.

    The first copy follows ``params`` throughout; the second suppresses all
    nonlinearity/perturbation inside ``window`` (pure voter there) and is
    identical otherwise.  Returns (traj_full, traj_windowed, discrepancy)
    where discrepancy is the number of sites at which the two terminal
    configurations differ.
    """
    t1, t2 = window
    if not 0 <= t1 <= t2 <= t_max:
        raise ValueError(f"window must satisfy 0 <= t1 <= t2 <= t_max, got {window}")
    if sample_dt is None:
        sample_dt = t_max / 200.0
    lat = config.lattice
    rng = as_rng(rng)
    tab = params.rate_table(lat.k)
    voter_tab = np.arange(lat.k + 1, dtype=np.float64) / lat.k
    r_cap = float(max(tab.max(), voter_tab.max()))
    nsamp = int(np.floor(t_max / sample_dt)) + 1
    dens_a = np.empty(nsamp)
    dens_b = np.empty(nsamp)
    bits_a = config.bits.copy()
    bits_b = config.bits.copy()
    disc0 = config.discordant_counts().astype(np.int8)
    s0, s1, s2, s3 = kernel_state(rng)
    ev_a, ev_b, discrepancy, *_ = _kernels.coupled_window_run(
        s0, s1, s2, s3, bits_a, bits_b, disc0.copy(), disc0.copy(),
        lat.nbr_in, tab, tab, voter_tab, r_cap,
        float(t1), float(t2), float(t_max), float(sample_dt), dens_a, dens_b,
    )
    times = np.arange(nsamp, dtype=np.float64) * sample_dt
    traj_a = Trajectory(times, dens_a, int(ev_a), Configuration(lat, bits_a),
                        final_time=float(t_max))
    traj_b = Trajectory(times.copy(), dens_b, int(ev_b), Configuration(lat, bits_b),
                        final_time=float(t_max))
    return traj_a, traj_b, int(discrepancy)
