"""Weak-selection scaling: the density path follows the limiting ODE.

Perturbation strength eps maps ODE time t to particle time t/eps.  As the
torus grows, the sup deviation between the scaled particle density and the
integrated ODE shrinks.
"""

import numpy as np

from qvoter.dynamics import QVoterParams
from qvoter.equilibrium import coalescence_fates
from qvoter.lattice import E3_OFFSETS, build_torus
from qvoter.ode import compare_particle_ode, integrate
from qvoter.reaction import perturbation_rates, phi_from_fates

rng = np.random.default_rng(11)
rates = perturbation_rates(3, "q<1")
fates = coalescence_fates(3, E3_OFFSETS, 1e3, 200_000, rng)
term = phi_from_fates(fates, rates)
print(f"reaction term: {term.factored_str()}")

eps, u0, t0 = 0.15, 0.25, 3.0
sol = integrate(term.phi, u0, t0, dt=0.05)
print(f"ODE: u(0)={u0} -> u({t0})={sol.values[-1]:.4f}")

params = QVoterParams.perturbed(eps, rates)
for L in (8, 12, 16):
    lat = build_torus(L, E3_OFFSETS)
    comp = compare_particle_ode(lat, params, term.phi, u0, t0,
                                time_scale=eps, replicates=6,
                                master_seed=2, ode_dt=0.05)
    print(f"L={L:2d}: sup deviation per replicate "
          + " ".join(f"{d:.3f}" for d in comp.deviations)
          + f"   mean {comp.mean_deviation:.3f}")
