"""One rescaled walk on the sphere, pulled back to the tangent plane at its start.

Shows that the endpoint is recovered three ways: directly, as Exp of the pulled
back endpoint, and by recombining m subdivided pieces with psi_m.
"""
import numpy as np

from geowalk import MeasureFamily, RadialSpec, Sphere2, psi_m, pullback_vectors, run_rescaled_walk, subdivide_walk

S2 = Sphere2()
family = MeasureFamily(RadialSpec("uniform-sphere-shell", 0.5, 2), S2)
traj = run_rescaled_walk(family, S2.origin, n=400, seed=2024)

v = pullback_vectors(traj)
print(f"endpoint           {traj.endpoint}")
print(f"Exp(x0, v_n)       {S2.exp(S2.origin, v[-1])}")
for m in (1, 2, 8):
    rec = subdivide_walk(traj, m)
    out = psi_m(S2, S2.origin, list(rec.pulled_v))
    print(f"psi_{m} of pieces    {out}   |error| {np.linalg.norm(out - traj.endpoint):.1e}")

# the transported increments are i.i.d. draws at x0, so their sum tracks the pullback
for l in (100, 200, 400):
    z = traj.transported_increments[:l].sum(axis=0) / traj.n
    print(f"l = {l:3d}: |pullback - transported sum| = {np.linalg.norm(v[l] - z):.2e}")
