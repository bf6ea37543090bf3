"""Topological invariants and their cross-checks.

Conventions
-----------
``[X_j, P]`` is the wrapped commutator with entries ``(x - y)_j P[x, y]``.
The Chern number is

    Ch(P) = s C_2 T(P ([X_1, P][X_2, P] - [X_2, P][X_1, P])),   C_2 = -2 pi i,

with ``s = CHERN_SIGN``.  The sign is fixed so that the Chern number equals the
half-signature of the even spectral localizer

    [[H - E, k(X_1 - i X_2)], [k(X_1 + i X_2), -(H - E)]]

on every gapped system we tested.  With the Peierls factor ``exp(+i theta x^y)``
and ``theta > 0`` this gives ``+1`` for the Landau-like gap below the top band
of amorphous patterns and ``-1`` for the lowest band of the square lattice.

The winding number of a chiral chain is ``Tr(u^* [X, u]) / L``, exactly ``+1``
for the forward shift on any pattern.
"""
from __future__ import annotations

import csv
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg

from .algebra import CovariantKernel, sobolev_norm_matrix
from .errors import (DimensionMismatch, FitFailure, GaplessAtZero, InvalidParameter,
                     KappaOutOfRange, NotChiral, SingularLocalizer)
from .hamiltonian import (ChiralChain, FluxIndex, HoppingRule, build_chiral_chain,
                          build_hamiltonian, chain_cells)
from .pattern import DelonePattern, pairwise_displacement, pairwise_distance, torus_displacement
from .spectral import (FermiProjector, eigensolve, eigenvalues, fermi_projector, gap_at,
                       low_density_gaps)

__all__ = [
    "CHERN_SIGN", "CliffordRep", "InvariantReport", "chern_number", "chern_even_general",
    "winding_number", "winding_of_unitary", "chiral_unitary", "localizer_index_even",
    "localizer_index_odd", "chern_localizer", "mobility_gap", "residue_trace_check",
    "hall_conductance_map", "HallCell", "write_map_csv", "localization_diagnostic",
    "sphere_volume",
]

CHERN_SIGN = -1
LOCALIZER_TOL = 1e-10


class CliffordRep:
    """Irreducible self-adjoint Clifford generators in dimension ``d``.

    ``gammas[j]`` is ``Gamma^{j+1}``; for even ``d``, ``grading`` is
    ``(-i)^{d/2} Gamma^1 ... Gamma^d``.
    """

    _sx = np.array([[0, 1], [1, 0]], dtype=complex)
    _sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    _sz = np.array([[1, 0], [0, -1]], dtype=complex)

    def __init__(self, d: int):
        if int(d) != d or d < 1:
            raise InvalidParameter(f"dimension must be a positive integer, got {d}")
        self.d = int(d)
        k = self.d // 2
        self.nu = 2 ** k
        gammas = []
        for j in range(k):
            left = [self._sz] * j
            right = [np.eye(2)] * (k - j - 1)
            for s in (self._sx, self._sy):
                gammas.append(_kron_all(left + [s] + right))
        if self.d % 2:
            gammas.append(_kron_all([self._sz] * k) if k else np.ones((1, 1), dtype=complex))
        self.gammas = gammas
        if self.d % 2 == 0:
            g = np.eye(self.nu, dtype=complex)
            for m in gammas:
                g = g @ m
            self.grading = (-1j) ** k * g
        else:
            self.grading = None


def _kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


@dataclass
class InvariantReport:
    value: float
    nearest_integer: int
    deviation: float
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def from_value(cls, value, **diagnostics):
        value = float(value)
        k = int(math.floor(value + 0.5))
        return cls(value, k, abs(value - k), diagnostics)

    def as_dict(self):
        return {"value": self.value, "nearest_integer": self.nearest_integer,
                "deviation": self.deviation, **self.diagnostics}


def _projector_matrix(P):
    return P.P if isinstance(P, FermiProjector) else np.asarray(P)


def _internal_count(M, pattern):
    n = M.shape[0]
    if pattern.n == 0 or n % pattern.n:
        raise DimensionMismatch(f"matrix of size {n} does not fit a pattern of {pattern.n} points")
    return n // pattern.n


def _position_commutators(M, pattern):
    """Wrapped ``[X_j, M]`` for each axis, expanded over internal states."""
    m = _internal_count(M, pattern)
    out = []
    for j in range(pattern.d):
        D = pairwise_displacement(pattern, j)
        if m > 1:
            D = np.kron(D, np.ones((m, m)))
        out.append(D * M)
    return out


def chern_number(P, pattern: DelonePattern, sign: int = CHERN_SIGN) -> InvariantReport:
    """Chern number of a projector on a planar torus pattern."""
    if pattern.d != 2:
        raise DimensionMismatch(f"Chern number needs d = 2, pattern has d = {pattern.d}")
    M = _projector_matrix(P)
    A, B = _position_commutators(M, pattern)
    PA = M @ A
    PB = M @ B
    t = np.sum(PA * B.T) - np.sum(PB * A.T)
    c = sign * (-2j * np.pi) * t / pattern.n
    return InvariantReport.from_value(c.real, imaginary_residual=float(abs(c.imag)), sign=sign,
                                      C_d="-2*pi*i")


def chern_even_general(P, pattern: DelonePattern, d: int, sign: int = CHERN_SIGN) -> InvariantReport:
    """``s C_d sum_rho (-1)^rho T(P prod_j [X_rho(j), P])`` with ``C_d = (-2 pi i)^(d/2) / (d/2)!``."""
    if d % 2 or d < 2:
        raise DimensionMismatch(f"d must be even and positive, got {d}")
    if pattern.d != d:
        raise DimensionMismatch(f"pattern has d = {pattern.d}, expected {d}")
    M = _projector_matrix(P)
    comms = _position_commutators(M, pattern)
    total = 0j
    for perm in itertools.permutations(range(d)):
        inv = sum(1 for i in range(d) for j in range(i + 1, d) if perm[i] > perm[j])
        prod = M
        for j in perm:
            prod = prod @ comms[j]
        total += (-1) ** inv * np.trace(prod)
    k = d // 2
    c = sign * (-2j * np.pi) ** k / math.factorial(k) * total / pattern.n
    return InvariantReport.from_value(c.real, imaginary_residual=float(abs(c.imag)), sign=sign)


# ----------------------------------------------------------------------------
# odd pairing

def _chain_blocks(H, pattern1d):
    a_idx, b_idx, cells = chain_cells(pattern1d)
    m = len(a_idx)
    H = np.asarray(H)
    if H.shape != (2 * m, 2 * m):
        raise DimensionMismatch(f"expected a {2 * m}x{2 * m} chiral Hamiltonian, got {H.shape}")
    gamma = np.concatenate([np.ones(m), -np.ones(m)])
    anti = np.max(np.abs(gamma[:, None] * H + H * gamma[None, :])) if m else 0.0
    if anti > 1e-10:
        raise NotChiral(f"||Gamma H + H Gamma|| = {anti:.3e}")
    return H[m:, :m], cells


def chiral_unitary(q) -> tuple[np.ndarray, float]:
    """Polar part ``u = q (q^* q)^(-1/2)`` of the lower-left block and the smallest
    singular value of ``q`` (the gap of ``H`` at zero).

    ``[[0, u^*], [u, 0]]`` is ``1 - 2p`` for ``p`` the projector onto ``H <= 0``.
    """
    W, s, Vh = scipy.linalg.svd(q)
    smin = float(s.min()) if len(s) else math.inf
    if smin < 1e-8:
        raise GaplessAtZero(f"H has an eigenvalue of size {smin:.3e} at zero")
    return W @ Vh, smin


def winding_of_unitary(u, cells, L: float) -> InvariantReport:
    """``Tr(u^* [X, u]) / L`` with the wrapped commutator on cell positions."""
    cells = np.asarray(cells, dtype=float)
    D = torus_displacement(cells[:, None], cells[None, :], L)
    t = np.vdot(u, D * u)          # sum conj(u) * D * u = Tr(u^* [X, u])
    c1 = len(cells) / L
    value = c1 * t / max(len(cells), 1)
    return InvariantReport.from_value(value.real, imaginary_residual=float(abs(value.imag)),
                                      c1=c1)


def winding_number(H_chiral, pattern1d: DelonePattern | None = None) -> InvariantReport:
    """Winding number of a chiral chain.

    ``H_chiral`` is a :class:`ChiralChain` or a matrix in the ``[A..., B...]``
    ordering of :func:`build_chiral_chain` on ``pattern1d``.
    """
    if isinstance(H_chiral, ChiralChain):
        q, cells, L = H_chiral.q, H_chiral.cells, H_chiral.L
        _chain_blocks_check(H_chiral.hamiltonian)
    else:
        if pattern1d is None:
            raise InvalidParameter("a pattern is needed to locate the chain cells")
        q, cells = _chain_blocks(H_chiral, pattern1d)
        L = pattern1d.L
    u, smin = chiral_unitary(q)
    rep = winding_of_unitary(u, cells, L)
    rep.diagnostics["gap"] = 2 * smin
    return rep


def _chain_blocks_check(H):
    m = H.shape[0] // 2
    gamma = np.concatenate([np.ones(m), -np.ones(m)])
    anti = np.max(np.abs(gamma[:, None] * H + H * gamma[None, :])) if m else 0.0
    if anti > 1e-10:
        raise NotChiral(f"||Gamma H + H Gamma|| = {anti:.3e}")


# ----------------------------------------------------------------------------
# spectral localizers

def _half_signature(Lmat):
    ev = scipy.linalg.eigvalsh(Lmat)
    smallest = float(np.min(np.abs(ev)))
    if smallest < LOCALIZER_TOL:
        raise SingularLocalizer(f"localizer has an eigenvalue of size {smallest:.3e}")
    return int(np.sum(ev > 0) - np.sum(ev < 0)) // 2, smallest


def _scan(build, kappa, kappa0, n_kappa):
    if kappa is not None:
        if not kappa > 0:
            raise KappaOutOfRange(f"kappa must be positive, got {kappa}")
        return _half_signature(build(kappa))[0]
    if not kappa0 > 0:
        raise KappaOutOfRange("cannot choose kappa: no gap at the requested energy")
    values = {}
    for k in kappa0 * np.logspace(0.0, 1.0, n_kappa):
        values[float(k)] = _half_signature(build(k))[0]
    if len(set(values.values())) != 1:
        raise KappaOutOfRange(f"localizer index not constant over the kappa scan: {values}")
    return next(iter(values.values()))


def localizer_index_even(H, pattern: DelonePattern, E: float = 0.0, kappa: float | None = None,
                         x0=None, gap: float | None = None, n_kappa: int = 3) -> int:
    """Half-signature of the even spectral localizer.

    ``H`` is an open-boundary Hamiltonian on ``pattern`` (see
    ``build_hamiltonian(..., boundary='open')``); positions are the unwrapped
    coordinates relative to ``x0`` (default: the centre of the box).  Without
    ``kappa``, the index is evaluated at ``kappa0 * [1, ..., 10]`` with
    ``kappa0 = gap / (4 diam)`` and must be the same for all of them.  ``gap``
    defaults to the width of the spectral gap of ``H`` around ``E``.
    """
    if pattern.d != 2:
        raise DimensionMismatch("the even localizer is implemented for d = 2")
    H = np.asarray(H)
    n = H.shape[0]
    m = _internal_count(H, pattern)
    x0 = np.full(2, pattern.L / 2) if x0 is None else np.asarray(x0, dtype=float)
    x = np.repeat(pattern.points - x0, m, axis=0)
    z = x[:, 0] - 1j * x[:, 1]
    shifted = H - E * np.eye(n)

    def build(k):
        out = np.empty((2 * n, 2 * n), dtype=complex)
        out[:n, :n] = shifted
        out[n:, n:] = -shifted
        out[:n, n:] = np.diag(k * z)
        out[n:, :n] = np.diag(k * z.conj())
        return out

    if gap is None and kappa is None:
        g = gap_at(eigenvalues(H), E)
        gap = 0.0 if g is None else g.width
    diam = pattern.L * math.sqrt(2.0)
    return _scan(build, kappa, (gap or 0.0) / (4 * diam), n_kappa)


def mobility_gap(eigs, E: float, levels: int = 10, ratio: float = 3.0) -> float:
    """Width of the gap around ``E``: the larger of the spectral gap and the
    low-density stretch of the spectrum containing ``E``.

    On disordered patterns a few localized states sit inside the mobility gap,
    so the spectral gap alone is a level spacing.
    """
    w = np.sort(np.asarray(eigs, dtype=float))
    g = gap_at(w, E)
    width = 0.0 if g is None else g.width
    if len(w) > 2 * levels:
        for run in low_density_gaps(w, count=len(w), levels=levels, ratio=ratio):
            if run.low <= E <= run.high:
                width = max(width, run.width)
    return width


def chern_localizer(pattern, rule: HoppingRule | None, flux, E: float, kappa=None):
    """Even localizer index of the open truncation, with the gap width taken
    from the torus spectrum at ``E`` (see :func:`mobility_gap`)."""
    w = eigenvalues(build_hamiltonian(pattern, rule, flux))
    H = build_hamiltonian(pattern, rule, flux, boundary="open")
    return localizer_index_even(H, pattern, E, kappa=kappa, gap=mobility_gap(w, E))


def localizer_index_odd(chain: ChiralChain, kappa: float | None = None, gap: float | None = None,
                        n_kappa: int = 3) -> int:
    """Half-signature of ``kappa X Gamma + H`` on an open chiral chain.

    Positions are the cell positions measured from the middle of the chain.
    Without ``kappa`` the index is scanned over ``kappa0 * [1, ..., 10]``
    with ``kappa0 = gap / L``.  ``gap`` defaults to twice the third smallest
    singular value of ``q``: an open chain in a nontrivial phase carries two
    near-zero end modes, so the bulk gap sits above them.
    """
    H = chain.hamiltonian
    _chain_blocks_check(H)
    m = chain.n_cells
    x = chain.cells - chain.L / 2
    X = np.concatenate([x, -x])

    def build(k):
        return H + np.diag(k * X)

    if gap is None and kappa is None:
        s = scipy.linalg.svd(chain.q, compute_uv=False)
        gap = 2 * float(np.sort(s)[min(2, m - 1)]) if m else 0.0
    return _scan(build, kappa, (gap or 0.0) / chain.L, n_kappa)


# ----------------------------------------------------------------------------
# residue trace

def sphere_volume(d: int) -> float:
    """Surface measure of the unit sphere ``S^(d-1)``."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def _tail(M, s, d):
    """``int_M^inf (1 + r^2)^(-s/2) r^(d-1) dr``."""
    if d == 2:
        return (1 + M * M) ** (1 - s / 2) / (s - 2)
    val, _ = scipy.integrate.quad(lambda r: (1 + r * r) ** (-s / 2) * r ** (d - 1), M, np.inf,
                                  epsabs=0, epsrel=1e-12, limit=200)
    return val


def residue_trace_check(f, radii, s_grid=None, center=None, trace=None):
    """Compare ``Vol(S^(d-1)) T(f)`` with the residue at ``s = d`` of
    ``Tr(f (1 + |X|^2)^(-s/2))``.

    ``f`` is a :class:`CovariantKernel` (only its diagonal enters).  For each
    ``s`` the truncated sums ``G_M(s)`` at the given radii are extrapolated to
    ``M -> inf`` by a least-squares fit ``G_M = G + c t(M, s)`` with the
    continuum tail ``t``; then ``(s - d) G(s) = A + B (s - d)`` is fitted and
    ``A`` is the residue estimate.
    """
    pattern = f.pattern
    d = pattern.d
    if d not in (1, 2):
        raise DimensionMismatch(f"residue check implemented for d in (1, 2), got {d}")
    radii = sorted(float(r) for r in radii)
    if len(radii) < 2:
        raise InvalidParameter("need at least two truncation radii")
    if radii[-1] > pattern.L / 2:
        raise InvalidParameter(f"largest radius {radii[-1]} exceeds L/2")
    s_grid = d + np.arange(2, 11) / 10.0 if s_grid is None else np.asarray(s_grid, dtype=float)
    if np.any(s_grid <= d):
        raise InvalidParameter("all s values must exceed d")
    center = np.full(d, pattern.L / 2) if center is None else np.asarray(center, dtype=float)
    diag = np.real(np.diag(f.values))
    r = np.sqrt(np.sum(torus_displacement(pattern.points, center, pattern.L) ** 2, axis=-1))

    extrapolated = []
    for s in s_grid:
        weights = diag * (1 + r * r) ** (-s / 2)
        G = np.array([weights[r <= M].sum() for M in radii])
        T = np.array([_tail(M, s, d) for M in radii])
        design = np.column_stack([np.ones_like(T), -T])
        (g_inf, _), *_ = np.linalg.lstsq(design, G, rcond=None)
        extrapolated.append(g_inf)
    extrapolated = np.array(extrapolated)
    y = (s_grid - d) * extrapolated
    design = np.column_stack([np.ones_like(s_grid), s_grid - d])
    (A, B), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = float(np.max(np.abs(design @ np.array([A, B]) - y)))
    tpv = float(np.mean(diag)) if trace is None else float(trace)
    lhs = sphere_volume(d) * tpv
    scale = max(abs(A), abs(lhs), 1e-300)
    if resid > 0.1 * max(abs(A), 0.05 * sphere_volume(d)):
        raise FitFailure(f"residue fit residual {resid:.3e} exceeds 10% of A = {A:.3e}")
    return {"lhs": lhs, "rhs_estimate": float(A), "slope": float(B),
            "relative_error": abs(A - lhs) / scale if lhs else abs(A - lhs),
            "fit_residual": resid, "radii": radii, "s_grid": [float(s) for s in s_grid]}


# ----------------------------------------------------------------------------
# Hall conductance map and diagnostics

@dataclass(frozen=True)
class HallCell:
    n: int
    theta: float
    E_F: float
    sigma_H: float
    nearest_int: int
    deviation: float
    gap_width: float
    sobolev_01_2: float


def _cells_for_flux(pattern, rule, n, ef_grid):
    fx = FluxIndex(n, pattern.L)
    spec = eigensolve(build_hamiltonian(pattern, rule, fx))
    out = []
    for E in ef_grid:
        proj = fermi_projector(spec, E)
        rep = chern_number(proj, pattern)
        g = gap_at(spec.eigenvalues, E)
        width = 0.0 if g is None else g.width
        sob = sobolev_norm_matrix(proj.P, pattern, 1, 2)
        out.append(HallCell(n, fx.theta, float(E), rep.value, rep.nearest_integer, rep.deviation,
                            width, sob))
    return out


def hall_conductance_map(pattern, rule: HoppingRule | None, flux_indices, ef_grid, threads: int = 1):
    """Chern number on the grid ``flux_indices x ef_grid``; one eigensolve per flux.

    Rows are ordered by ``(n, E_F)`` as given.
    """
    rule = HoppingRule() if rule is None else rule
    ns = [int(n) for n in flux_indices]
    ef_grid = [float(e) for e in ef_grid]
    if not ns or not ef_grid:
        raise InvalidParameter("empty flux or Fermi-energy grid")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(lambda n: _cells_for_flux(pattern, rule, n, ef_grid), ns))
    else:
        blocks = [_cells_for_flux(pattern, rule, n, ef_grid) for n in ns]
    return [c for b in blocks for c in b]


MAP_COLUMNS = ["n", "theta", "E_F", "sigma_H", "nearest_int", "deviation", "gap_width", "sobolev_01_2"]


def write_map_csv(cells, path) -> None:
    with open(os.fspath(path), "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(MAP_COLUMNS)
        for c in cells:
            out.writerow([c.n, repr(c.theta), repr(c.E_F), repr(c.sigma_H), c.nearest_int,
                          repr(c.deviation), repr(c.gap_width), repr(c.sobolev_01_2)])


def localization_diagnostic(P, pattern: DelonePattern, bins: int = 20,
                            floor: float = 1e-3) -> dict:
    """Sobolev ``||P||_{1,2}``, second-moment spread and an exponential decay
    length of ``|P[x, y]|``.

    The spread is ``sum |P[x, y]|^2 |x - y|^2 / sum |P[x, y]|^2`` over all
    pairs; for a lowest Landau level it is ``2 / theta`` in the continuum.

    The decay length comes from a straight-line fit of ``log`` of the binned
    mean ``|P[x, y]|`` against torus distance, using the near-field bins whose
    mean exceeds ``floor`` times that of the first occupied bin; ``0`` when
    there is nothing off the diagonal to fit.
    """
    M = _projector_matrix(P)
    sob = sobolev_norm_matrix(M, pattern, 1, 2)
    m = _internal_count(M, pattern)
    dist = pairwise_distance(pattern)
    if m > 1:
        dist = np.kron(dist, np.ones((m, m)))
    mag = np.abs(M)
    w2 = mag ** 2
    total = w2.sum()
    spread = float((w2 * dist ** 2).sum() / total) if total > 0 else 0.0
    off = dist > 0
    decay = 0.0
    fit_error = 0.0
    if np.any(off) and np.max(mag[off]) > 1e-14:
        edges = np.linspace(0.0, dist.max(), bins + 1)
        idx = np.clip(np.digitize(dist[off], edges) - 1, 0, bins - 1)
        sums = np.bincount(idx, weights=mag[off], minlength=bins)
        counts = np.bincount(idx, minlength=bins)
        centers = 0.5 * (edges[1:] + edges[:-1])
        means = sums / np.maximum(counts, 1)
        keep = (counts > 0) & (means > 1e-14)
        if keep.any():
            first = means[np.flatnonzero(keep)[0]]
            keep &= means >= floor * first
        if keep.sum() >= 2:
            xs, ys = centers[keep], np.log(means[keep])
            slope, icpt = np.polyfit(xs, ys, 1)
            fit_error = float(np.sqrt(np.mean((slope * xs + icpt - ys) ** 2)))
            decay = float(-1.0 / slope) if slope < 0 else math.inf
    return {"sobolev_01_2": sob, "second_moment": spread, "kernel_decay_length": decay,
            "fit_error": fit_error}
