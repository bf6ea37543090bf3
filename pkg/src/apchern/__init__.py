"""Topological invariants of tight-binding models on Delone point patterns.

Modules
-------
pattern      amorphous, periodic and custom point patterns on a flat torus
algebra      twisted groupoid algebra: kernels, convolution, representation
hamiltonian  magnetic hopping Hamiltonians and chiral chains
spectral     eigensolves, Fermi projectors, gap reports, flux sweeps
invariants   Chern and winding numbers, spectral localizers, residue check
cli          configuration-driven experiment runner (``python -m apchern``)
"""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .pattern import (TorusGeometry, DelonePattern, PatternEnsemble, generate_pattern,  # noqa: F401
                      periodic_lattice, chain_pattern, verify_delone, translate_pattern,
                      torus_displacement, torus_distance, save_pattern, load_pattern)
from .algebra import (MagneticField, CovariantKernel, cocycle, represent, convolve,  # noqa: F401
                      involution, derivation, magnetic_translation, trace_per_volume,
                      sobolev_norm)
from .hamiltonian import (HoppingRule, FluxIndex, snap_flux, build_hamiltonian,  # noqa: F401
                          build_chiral_chain)
from .spectral import (SpectralData, FermiProjector, eigensolve, fermi_projector,  # noqa: F401
                       find_gaps, spectrum_butterfly, dos)
from .invariants import (CliffordRep, InvariantReport, chern_number, chern_even_general,  # noqa: F401
                         winding_number, localizer_index_even, localizer_index_odd,
                         residue_trace_check, hall_conductance_map, localization_diagnostic)
