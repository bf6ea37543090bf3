"""The trace per volume as a residue.

Run with ``python demos/05_residue_trace.py``.  For a kernel f, the sum
G(s) = sum_x f(x, x) (1 + |x|^2)^(-s/2) over the pattern diverges as s -> d;
its residue there is Vol(S^(d-1)) times the trace per volume of f.  The check
truncates the sum at a few radii, extrapolates in the radius, then fits the
pole.
"""
import math

import numpy as np

from apchern import CovariantKernel, TorusGeometry, generate_pattern
from apchern.invariants import residue_trace_check

p = generate_pattern(TorusGeometry(60, 2), 0.83, seed=0)
rng = np.random.default_rng(1)
kernels = {
    "unit": CovariantKernel.unit(p),
    "random positive diagonal": CovariantKernel(p, np.diag(rng.uniform(0.5, 1.5, p.n))),
    "stripes cos(2 pi x / 2.5)": CovariantKernel(p, np.diag(np.cos(2 * np.pi * p.points[:, 0] / 2.5))),
}
print(f"{'kernel':28s} {'2 pi T(f)':>10s} {'residue':>10s}")
for name, f in kernels.items():
    rep = residue_trace_check(f, [10, 20, 29])
    print(f"{name:28s} {rep['lhs']:10.4f} {rep['rhs_estimate']:10.4f}")
print(f"\n2 pi = {2 * math.pi:.4f}")
