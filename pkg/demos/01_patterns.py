"""Amorphous point patterns on a flat torus.

Run with ``python demos/01_patterns.py``.  A random hard-core pattern at unit
density is checked to be a Delone set, then compared with the square lattice
of the same size.
"""
import numpy as np

from apchern import TorusGeometry, generate_pattern, periodic_lattice, verify_delone
from apchern.pattern import min_pair_distance, pairwise_distance

geo = TorusGeometry(20, 2)

# Random sequential placement: points closer than d_min are rejected until
# N = L^2 points sit in the box, so the density is exactly one.
p = generate_pattern(geo, d_min=0.83, seed=0)
print(f"{p.n} points in a {p.L:g} x {p.L:g} box, kind={p.kind}")
print(f"closest pair     {min_pair_distance(p):.3f}  (hard core 0.83)")

# Delone: balls of radius r hold at most one point, balls of radius R at least one.
rep = verify_delone(p, r=0.83 / 2, R=2.0)
print(f"Delone (r=0.415, R=2): {rep.is_delone}, largest hole ~ {rep.hole_estimate:.2f}")

# Coordination: how many neighbours within 1.2 on average.  The lattice has
# exactly four at distance one.
for name, pat in (("amorphous", p), ("lattice", periodic_lattice(geo))):
    D = pairwise_distance(pat)
    z = ((D > 0) & (D < 1.2)).sum(axis=1)
    print(f"{name:10s} mean neighbours within 1.2: {z.mean():.2f} (min {z.min()}, max {z.max()})")

# Same seed, same pattern: the generator is deterministic.
q = generate_pattern(geo, d_min=0.83, seed=0)
print("reproducible:", np.array_equal(p.points, q.points), p.fingerprint()[:16])
