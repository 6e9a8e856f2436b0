"""Monte-Carlo ball rates against the analytic rate function, flat line and sphere.

Finite-n rates sit above the limit and creep down toward it; the gap shrinks
roughly like log(n)/n, so desk-scale runs only get within a few tens of percent.
"""
import math

import numpy as np

from geowalk import MeasureFamily, RadialSpec, Sphere2, estimate_ball_rate, inf_over_ball, rate_function

line = MeasureFamily(RadialSpec("two-point-1d", 1.0, 1))
rep = estimate_ball_rate(line, np.zeros(1), np.array([0.5]), 0.05, [20, 50, 100], 1_000_000, seed=0)
# S_n / n lives on a lattice of spacing 2/n; n = 10 would put no lattice point inside the open ball
print("two-point walk on R, ball B(0.5, 0.05)")
print(f"  inf over ball of Lambda* = {rep.inf_over_ball_rate:.5f}, Lambda*(0.5) = {rep.analytic_rate:.6f}")
for n, h, r in zip(rep.n_values, rep.hit_counts, rep.empirical_rates):
    print(f"  n = {n:3d}  hits {h:7d}  rate {r:.5f}" if h else f"  n = {n:3d}  no hits")

S2 = Sphere2()
shell = MeasureFamily(RadialSpec("uniform-sphere-shell", 0.5, 2), S2)
print("\nshell walk on S2, r = 0.5, eps = 0.05")
for d in (0.1, 0.15, 0.3):
    target = S2.exp(S2.origin, [d, 0.0, 0.0])
    ball = inf_over_ball(shell, S2.origin, target, 0.05)
    print(f"  distance {d}: I_M(center) = {rate_function(shell, S2.origin, target):.5f}, "
          f"inf over ball = {ball:.5f}, hits at n = 200 expected near {1e6 * math.exp(-200 * ball):.2g} per 1e6")
rep = estimate_ball_rate(shell, S2.origin, S2.exp(S2.origin, [0.15, 0.0, 0.0]), 0.05, [25, 50, 100], 100_000,
                         seed=1)
for n, h, r in zip(rep.n_values, rep.hit_counts, rep.empirical_rates):
    print(f"  distance 0.15, n = {n:3d}: hits {h:6d}  rate {r:.5f}  (limit {rep.inf_over_ball_rate:.5f})"
          if h else f"  distance 0.15, n = {n:3d}: no hits")
