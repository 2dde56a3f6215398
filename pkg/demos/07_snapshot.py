"""Cross-sections of the two phases.

q < 1 sustains a mixed two-phase pattern; q > 1 coarsens into large
monochrome domains on its way to fixation.  Each run prints the middle
z-slice after the transient.
"""

import numpy as np

from qvoter.dynamics import QVoterParams, run, set_product_measure
from qvoter.experiments import snapshot_cross_section
from qvoter.lattice import Configuration, NN6_OFFSETS, build_torus

L = 40
lat = build_torus(L, NN6_OFFSETS)

for q, t_max in ((0.9, 60.0), (1.1, 60.0)):
    rng = np.random.default_rng(2)
    config = Configuration(lat)
    set_product_measure(config, 0.5, rng)
    traj = run(config, QVoterParams.direct(q), t_max, rng, sample_dt=t_max)
    grid = snapshot_cross_section(config, "z", L // 2)
    shares = [row.count("1") / L for row in grid]
    print(f"q={q}, t={t_max}, global density {config.density:.3f}, "
          f"slice ones share {np.mean(shares):.3f}")
    for row in grid:
        print("  " + row.replace("0", ".").replace("1", "#"))
    print()
