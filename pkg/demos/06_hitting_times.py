"""Birth-death hitting times and the voter ones-count.

The exact absorption-time formula for a +-1 chain with position-dependent
jump rates is compared against simulation, and the empirical jump-rate
profile of the voter ones-count is measured (it tracks 2|boundary|/k).
"""

import numpy as np

from qvoter.greens import expected_hitting_time, simulate_hitting, voter_rate_profile
from qvoter.lattice import Configuration, NN6_OFFSETS, build_torus

x, z = 10, 100
for rate in ("constant", "linear", "power:0.3333333"):
    exact = expected_hitting_time(x, z, rate)
    est = simulate_hitting(x, z, rate, 20_000, np.random.default_rng(3))
    print(f"r(j)={rate:16s} exact {exact:9.3f}   simulated "
          f"{est.mean_time:9.3f} +/- {est.se_time:.3f}   "
          f"P(hit {z} first) {est.frac_top:.3f} (x/z = {x / z})")

print()
lat = build_torus(8, NN6_OFFSETS)
rng = np.random.default_rng(9)
config = Configuration(lat)
sites = rng.choice(lat.n, size=40, replace=False)
config.bits[sites] = 1
config.ones_count = 40
profile = voter_rate_profile(config, 400.0, rng)
visited = np.nonzero(profile.time_at[1:80] > 0)[0] + 1
print("voter ones-count rate profile (r_hat(j)/j plateaus in the dilute phase):")
for j in visited[:: max(1, len(visited) // 8)]:
    print(f"  j={j:3d}  r_hat={profile.mean_rate[j]:7.2f}  r_hat/j = "
          f"{profile.mean_rate[j] / j:.3f}")
