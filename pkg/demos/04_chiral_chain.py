"""Winding number of a dimerized chain on an aperiodic 1D pattern.

Run with ``python demos/04_chiral_chain.py``.  The chain alternates strong and
weak bonds; the sign of the dimerization decides which cells are connected
across the torus and therefore the winding.
"""
import numpy as np

from apchern import HoppingRule, build_chiral_chain, chain_pattern
from apchern.invariants import localizer_index_odd, winding_number, winding_of_unitary

# The forward shift on a ring is the reference: winding exactly one.
L = 10
shift = np.roll(np.eye(L), 1, axis=0)
print("shift:", winding_of_unitary(shift, np.arange(L, dtype=float), float(L)).value)

pattern = chain_pattern(240, 0.6, seed=0)
rule = HoppingRule(beta=1.0)
print(f"\nchain of {pattern.n} sites ({pattern.n // 2} cells)")
print(" delta   winding     localizer   gap")
for delta in (-0.8, -0.5, -0.2, 0.2, 0.5, 0.8):
    rep = winding_number(build_chiral_chain(pattern, rule, delta))
    idx = localizer_index_odd(build_chiral_chain(pattern, rule, delta, boundary="open"))
    print(f"{delta:+.1f}   {rep.value:+.8f}   {idx:+d}          {rep.diagnostics['gap']:.4f}")

# A strong intra-cell bond moves the chain into the trivial phase.
rep = winding_number(build_chiral_chain(pattern, rule, 0.5, intra=4.0))
print(f"\ndelta = 0.5 with intra-cell hopping 4: {rep.value + 0.0:.8f}")
