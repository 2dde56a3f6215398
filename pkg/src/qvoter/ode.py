"""Integration of the limiting density ODE and particle-vs-ODE comparison.

The right-hand sides are smooth low-degree polynomials (or the mean-field
form), so a fixed-step classical Runge-Kutta scheme with step halving is
used: deterministic, cheap, and convenient for golden tests.  Halving stops
when two successive refinements agree to 1e-9 in sup norm on the output
grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import as_rng, replica_rng
from .dynamics import QVoterParams, Trajectory, run, set_product_measure
from .lattice import Configuration, TorusLattice

__all__ = ["OdeSolution", "integrate", "mean_field_rhs", "compare_particle_ode"]


def mean_field_rhs(q: float):
    """Complete-graph drift  du/dt = -u(1-u)**q + (1-u)u**q."""
    if q <= 0:
        raise ValueError("q must be positive")

    def rhs(u: float) -> float:
        return -u * (1.0 - u) ** q + (1.0 - u) * u**q

    rhs.describe = f"mean-field(q={q})"
    return rhs


def _as_callable(rhs):
    if callable(rhs) and not hasattr(rhs, "coeffs"):
        return rhs, getattr(rhs, "describe", "callable")
    coeffs = np.array([float(c) for c in rhs.coeffs])

    def poly(u: float) -> float:
        acc = 0.0
        for c in coeffs[::-1]:
            acc = acc * u + c
        return acc

    return poly, f"polynomial(degree={len(coeffs) - 1})"


@dataclass
class OdeSolution:
    times: np.ndarray
    values: np.ndarray
    rhs_description: str
    dt_used: float

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def to_csv(self, fh) -> None:
        own = isinstance(fh, (str, bytes))
        f = open(fh, "w") if own else fh
        try:
            f.write("time,u\n")
            for t, u in zip(self.times, self.values):
                f.write(f"{t:.17g},{u:.17g}\n")
        finally:
            if own:
                f.close()


def _rk4_path(f, u0: float, T: float, n_steps: int) -> np.ndarray:
    h = T / n_steps
    out = np.empty(n_steps + 1)
    out[0] = u = u0
    for i in range(n_steps):
        k1 = f(u)
        k2 = f(u + 0.5 * h * k1)
        k3 = f(u + 0.5 * h * k2)
        k4 = f(u + h * k3)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = u
    return out


def integrate(rhs, u0: float, T: float, dt: float, tol: float = 1e-9,
              max_halvings: int = 14) -> OdeSolution:
    """Classical fixed-step RK4 with step halving until two refinements agree
    to ``tol`` in sup norm on the requested grid."""
    if not 0.0 <= u0 <= 1.0:
        raise ValueError("u0 must lie in [0,1]")
    if dt <= 0 or T <= 0:
        raise ValueError("dt and T must be positive")
    f, desc = _as_callable(rhs)
    n_out = int(round(T / dt))
    n_out = max(n_out, 1)
    times = np.linspace(0.0, T, n_out + 1)
    mult = 1
    prev = _rk4_path(f, u0, T, n_out * mult)[::mult]
    for _ in range(max_halvings):
        mult *= 2
        cur = _rk4_path(f, u0, T, n_out * mult)[::mult]
        if np.max(np.abs(cur - prev)) < tol:
            return OdeSolution(times, cur, desc, T / (n_out * mult))
        prev = cur
    return OdeSolution(times, prev, desc, T / (n_out * mult // 2))


@dataclass
class ParticleOdeComparison:
    """Per-replicate sup deviation between the scaled density path and the
    ODE, on the shared output grid."""

    ode: OdeSolution
    deviations: np.ndarray
    trajectories: list

    @property
    def mean_deviation(self) -> float:
        return float(self.deviations.mean())

    def to_csv(self, fh) -> None:
        own = isinstance(fh, (str, bytes))
        f = open(fh, "w") if own else fh
        try:
            f.write("replicate,sup_deviation\n")
            for i, d in enumerate(self.deviations):
                f.write(f"{i},{d:.17g}\n")
        finally:
            if own:
                f.close()


def compare_particle_ode(lattice: TorusLattice, params: QVoterParams, rhs,
                         u0: float, t0: float, time_scale: float,
                         replicates: int, master_seed: int,
                         ode_dt: float = 0.01,
                         keep_trajectories: bool = False) -> ParticleOdeComparison:
    """Run replicate particle systems and compare their densities to the ODE.

    ODE time t corresponds to particle time t / time_scale (time_scale is
    epsilon_n in the weak-selection scaling, times the extracted constant
    when the rhs has been normalized).  Each replicate starts from product
    measure at density u0 under its own derived stream.
    """
    if not 0.0 < time_scale < 1.0:
        raise ValueError("time_scale must lie in (0,1)")
    sol = integrate(rhs, u0, t0, ode_dt)
    devs = np.empty(replicates)
    trajs = []
    for i in range(replicates):
        rng = replica_rng(master_seed, i)
        config = Configuration(lattice)
        set_product_measure(config, u0, rng)
        traj = run(config, params, t_max=t0 / time_scale, rng=rng,
                   sample_dt=ode_dt / time_scale, keep_final=False)
        m = min(len(traj.densities), len(sol.values))
        devs[i] = np.max(np.abs(traj.densities[:m] - sol.values[:m]))
        if keep_trajectories:
            trajs.append(traj)
    return ParticleOdeComparison(ode=sol, deviations=devs, trajectories=trajs)
