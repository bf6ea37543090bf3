"""Tight-binding Hamiltonians on point patterns.

``build_hamiltonian`` gives the isotropic hopping model

    H[x, y] = exp(i theta x^y) amplitude(|x - y|),   x^y = (x1 y2 - x2 y1) / 2,

on the torus (magnetic-periodic gauge of :mod:`apchern.algebra`) or on the
open truncation of the pattern.  ``build_chiral_chain`` gives a bipartite
chain whose winding is set by the sign of the dimerization.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .algebra import CovariantKernel, MagneticField, represent, triangle_flux
from .errors import (FluxNotQuantized, FluxNotQuantizedWarning, InvalidParameter,
                     OddSiteCount, RangeTooLarge)
from .pattern import DelonePattern, torus_displacement

__all__ = ["HoppingRule", "FluxIndex", "snap_flux", "resolve_flux", "build_hamiltonian",
           "ChiralChain", "chain_cells", "build_chiral_chain"]

DEFAULT_BETA = 3.0


@dataclass(frozen=True)
class HoppingRule:
    """Hopping amplitude as a function of distance.

    ``amplitude`` defaults to ``exp(-beta r)``.  ``cutoff`` drops pairs farther
    apart than the given distance.  ``internal`` is an optional Hermitian
    ``n_internal x n_internal`` matrix multiplying every hopping.  ``onsite``
    replaces the diagonal ``amplitude(0)``; ``onsite=0`` measures energies from
    the on-site level.
    """

    beta: float = DEFAULT_BETA
    cutoff: float | None = None
    n_internal: int = 1
    onsite: float | None = None
    amplitude: Callable | None = field(default=None, compare=False)
    internal: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise InvalidParameter(f"beta must be positive, got {self.beta}")
        if self.cutoff is not None and not self.cutoff >= 0:
            raise InvalidParameter(f"cutoff must be non-negative, got {self.cutoff}")
        if int(self.n_internal) != self.n_internal or self.n_internal < 1:
            raise InvalidParameter(f"n_internal must be a positive integer, got {self.n_internal}")
        if self.internal is not None:
            m = np.asarray(self.internal, dtype=complex)
            if m.shape != (self.n_internal, self.n_internal) or not np.allclose(m, m.conj().T, atol=0):
                raise InvalidParameter("internal must be a Hermitian n_internal x n_internal matrix")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.amplitude is None:
            return np.exp(-self.beta * r)
        return np.asarray(self.amplitude(r), dtype=float)


@dataclass(frozen=True)
class FluxIndex:
    """Quantized field strength ``theta_n = 4 pi n / L``."""

    n: int
    L: float

    def __post_init__(self):
        if int(self.n) != self.n:
            raise InvalidParameter(f"flux index must be an integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def theta(self) -> float:
        return 4.0 * math.pi * self.n / self.L


def snap_flux(theta: float, L: float) -> FluxIndex:
    """Nearest grid point to ``theta``."""
    return FluxIndex(int(round(theta * L / (4.0 * math.pi))), L)


def resolve_flux(flux, L: float, strict: bool = False) -> FluxIndex:
    """Turn an index, a :class:`FluxIndex` or a raw ``theta`` into a :class:`FluxIndex`.

    A raw ``theta`` off the grid is snapped with a warning, or rejected when
    ``strict``.
    """
    if isinstance(flux, FluxIndex):
        if flux.L != L:
            raise InvalidParameter(f"flux index built for L={flux.L}, pattern has L={L}")
        return flux
    if isinstance(flux, (int, np.integer)):
        return FluxIndex(int(flux), L)
    theta = float(flux)
    snapped = snap_flux(theta, L)
    if abs(snapped.theta - theta) > 1e-12 * max(1.0, abs(theta)):
        msg = f"theta={theta!r} is off the 4*pi*n/L grid; nearest is n={snapped.n}, theta={snapped.theta!r}"
        if strict:
            raise FluxNotQuantized(msg)
        warnings.warn(msg + " (snapped)", FluxNotQuantizedWarning, stacklevel=3)
    return snapped


def _with_internal(H, rule):
    if rule.n_internal == 1:
        return H
    inner = np.eye(rule.n_internal) if rule.internal is None else np.asarray(rule.internal, dtype=complex)
    return np.kron(H, inner)


def build_hamiltonian(pattern: DelonePattern, rule: HoppingRule | None = None, flux=0,
                      boundary: str = "periodic", strict: bool = False) -> np.ndarray:
    """Hermitian hopping Hamiltonian on ``pattern``.

    Parameters
    ----------
    pattern : DelonePattern
    rule : HoppingRule, optional
        Defaults to ``exp(-3 r)`` without cutoff.
    flux : int, FluxIndex or float
        Flux index or field strength; raw values are snapped to the grid.
    boundary : {'periodic', 'open'}
        ``'open'`` drops the torus identification: distances and phases use the
        fundamental-domain coordinates directly.
    strict : bool
        Raise instead of snapping an off-grid ``theta``.

    Returns
    -------
    ndarray
        ``(N n_internal) x (N n_internal)`` complex matrix, site-major.
    """
    rule = HoppingRule() if rule is None else rule
    fx = resolve_flux(flux, pattern.L, strict=strict)
    if fx.n != 0 and pattern.d != 2:
        raise InvalidParameter("nonzero flux needs a planar pattern")
    if rule.cutoff is not None and rule.cutoff > pattern.L / 2:
        raise RangeTooLarge(f"cutoff {rule.cutoff} exceeds L/2 = {pattern.L / 2}")
    field_ = MagneticField.from_strength(-fx.theta) if pattern.d == 2 else MagneticField.zero(pattern.d)
    if boundary == "periodic":
        kernel = CovariantKernel.radial(pattern, rule, cutoff=rule.cutoff)
        H = represent(kernel, field_)
    elif boundary == "open":
        x = pattern.points
        diff = x[:, None, :] - x[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        amp = rule(dist)
        if rule.cutoff is not None:
            amp = np.where(dist <= rule.cutoff, amp, 0.0)
        P = triangle_flux(field_, x[:, None, :], x[None, :, :])
        P = 0.5 * (P - P.T)
        H = (np.cos(P) - 1j * np.sin(P)) * amp
    else:
        raise InvalidParameter(f"boundary must be 'periodic' or 'open', got {boundary!r}")
    if rule.onsite is not None:
        np.fill_diagonal(H, rule.onsite)
    return _with_internal(H, rule)


# ----------------------------------------------------------------------------
# chiral chains

@dataclass(frozen=True, eq=False)
class ChiralChain:
    """Bipartite chain ``H = [[0, q^*], [q, 0]]`` in the ordering ``[A..., B...]``.

    ``cells`` are the cell positions (midpoints of the ``(A_i, B_i)`` pairs),
    ``order`` maps matrix rows to pattern indices.
    """

    hamiltonian: np.ndarray
    q: np.ndarray
    cells: np.ndarray
    order: np.ndarray
    L: float
    boundary: str

    @property
    def n_cells(self) -> int:
        return self.q.shape[0]

    @property
    def parity(self) -> np.ndarray:
        m = self.n_cells
        return np.concatenate([np.ones(m), -np.ones(m)])


def chain_cells(pattern: DelonePattern):
    """Pair the sorted sites into cells.

    Returns ``(a_idx, b_idx, cells)``: pattern indices of the A and B sites of
    each cell and the cell midpoints (wrapped to ``[0, L)``).
    """
    if pattern.d != 1:
        raise InvalidParameter("chiral chains need a one-dimensional pattern")
    if pattern.n % 2:
        raise OddSiteCount(f"{pattern.n} sites cannot be split into A/B cells")
    order = np.argsort(pattern.points[:, 0], kind="stable")
    a_idx, b_idx = order[0::2], order[1::2]
    xa, xb = pattern.points[a_idx, 0], pattern.points[b_idx, 0]
    cells = xa + 0.5 * torus_displacement(xb, xa, pattern.L)
    return a_idx, b_idx, np.mod(cells, pattern.L)


def build_chiral_chain(pattern1d: DelonePattern, rule: HoppingRule | None = None,
                       dimerization: float = 0.0, intra: float = 0.0,
                       boundary: str = "periodic") -> ChiralChain:
    """Dimerized bipartite chain on a one-dimensional pattern.

    Site ``A_i`` hops to ``B_{i+1}`` with ``(1 + delta) a(r)`` and to ``B_{i-1}``
    with ``(1 - delta) a(r)``, ``r`` the distance between the two cells;
    ``intra`` adds ``intra * a(r)`` on the bond ``A_i - B_i`` (``r`` the
    distance between those two sites).  The winding of
    the gapped phases is ``sign(delta)`` when ``intra`` is small.
    """
    rule = HoppingRule() if rule is None else rule
    if boundary not in ("periodic", "open"):
        raise InvalidParameter(f"boundary must be 'periodic' or 'open', got {boundary!r}")
    a_idx, b_idx, cells = chain_cells(pattern1d)
    m = len(a_idx)
    L = pattern1d.L
    x = pattern1d.points[:, 0]

    def amp(u, v):
        return float(rule(abs(torus_displacement(u, v, L))))

    q = np.zeros((m, m), dtype=complex)
    for i in range(m):
        for step, weight in ((1, 1.0 + dimerization), (-1, 1.0 - dimerization)):
            j = i + step
            if boundary == "open" and not 0 <= j < m:
                continue
            j %= m
            q[j, i] += weight * amp(cells[i], cells[j])
        if intra:
            q[i, i] += intra * amp(x[a_idx[i]], x[b_idx[i]])
    H = np.zeros((2 * m, 2 * m), dtype=complex)
    H[m:, :m] = q
    H[:m, m:] = q.conj().T
    return ChiralChain(H, q, cells, np.concatenate([a_idx, b_idx]), L, boundary)
