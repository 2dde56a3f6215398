"""Density trajectories of the q-voter model in both regimes.

For q < 1 a mixed start is pulled toward density 1/2 and held there by the
reaction drift; for q > 1 the same start coarsens and collapses into one of
the absorbing unanimous states.
"""

import numpy as np

from qvoter import Configuration, QVoterParams, build_torus, run, set_product_measure
from qvoter.lattice import NN6_OFFSETS

L = 16
lat = build_torus(L, NN6_OFFSETS)

for q in (0.9, 1.1):
    rng = np.random.default_rng(1)
    config = Configuration(lat)
    set_product_measure(config, 0.25, rng)
    traj = run(config, QVoterParams.direct(q), t_max=150.0, rng=rng, sample_dt=5.0)
    line = " ".join(f"{d:.2f}" for d in traj.densities)
    print(f"q={q}: density every 5 time units:")
    print(f"  {line}")
    if traj.absorbed:
        print(f"  absorbed at t={traj.absorbed_time:.1f} "
              f"(state {'all-ones' if config.ones_count else 'all-zeros'})")
    else:
        print(f"  still active at t={traj.final_time:.0f}, {traj.events} flips")
    print()
