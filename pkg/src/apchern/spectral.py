"""Dense Hermitian spectra, Fermi projectors, gap reports and flux sweeps."""
from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceFailure, EFOnEigenvalueWarning, InvalidParameter, NotHermitian
from .hamiltonian import FluxIndex, HoppingRule, build_hamiltonian

__all__ = ["SpectralData", "FermiProjector", "check_hermitian", "eigensolve", "eigenvalues",
           "fermi_projector", "find_gaps", "low_density_gaps", "gap_at", "Gap", "ButterflyRow", "spectrum_butterfly",
           "dos", "write_butterfly_csv", "write_gap_csv", "gap_report"]

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return len(self.eigenvalues)


@dataclass(frozen=True, eq=False)
class FermiProjector:
    P: np.ndarray
    E_F: float
    rank: int


def check_hermitian(H, tol: float = HERMITIAN_TOL):
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvalidParameter(f"expected a square matrix, got shape {H.shape}")
    if H.size:
        dev = np.max(np.abs(H - H.conj().T))
        if dev > tol:
            raise NotHermitian(f"max |H - H^*| = {dev:.3e} exceeds {tol:.0e}")
    return H


def eigensolve(H) -> SpectralData:
    """Full eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    H = check_hermitian(H)
    try:
        w, v = scipy.linalg.eigh(H, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    return SpectralData(w, v)


def eigenvalues(H) -> np.ndarray:
    H = check_hermitian(H)
    try:
        return scipy.linalg.eigvalsh(H, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc


def fermi_projector(spec: SpectralData, E_F: float) -> FermiProjector:
    """``P = sum_{E_k <= E_F} v_k v_k^*`` (closed on the right)."""
    w = spec.eigenvalues
    if np.any(np.abs(w - E_F) < 1e-12):
        warnings.warn(f"E_F={E_F} is within 1e-12 of an eigenvalue; it is counted as occupied",
                      EFOnEigenvalueWarning, stacklevel=2)
    rank = int(np.searchsorted(w, E_F, side="right"))
    V = spec.eigenvectors[:, :rank]
    P = V @ V.conj().T
    # exact Hermitian symmetry
    P = 0.5 * (P + P.conj().T)
    return FermiProjector(P, float(E_F), rank)


@dataclass(frozen=True)
class Gap:
    low: float
    high: float

    @property
    def width(self) -> float:
        return self.high - self.low

    @property
    def mid(self) -> float:
        return 0.5 * (self.low + self.high)


def find_gaps(eigs, window=None, count: int = 2, min_width: float = 0.0, max_inside: int = 0,
              trim: float = 0.0):
    """The ``count`` widest gaps of the spectrum, widest first.

    Only eigenvalues inside ``window = (emin, emax)`` are considered.  With
    ``max_inside = m > 0`` a gap may contain up to ``m`` isolated eigenvalues
    (in-gap states of a mobility gap); its width is then the distance between
    the bracketing eigenvalues.  Gaps are picked greedily by width and never
    overlap.  ``max_inside=0`` gives the plain largest spacings.  ``trim``
    drops that fraction of the eigenvalues at each end of the spectrum first,
    so that sparse band tails do not register as gaps.
    """
    w = np.sort(np.asarray(eigs, dtype=float))
    if not 0 <= trim < 0.5:
        raise InvalidParameter(f"trim must lie in [0, 0.5), got {trim}")
    cut = int(math.floor(trim * len(w)))
    w = w[cut:len(w) - cut]
    if window is not None:
        w = w[(w >= window[0]) & (w <= window[1])]
    if len(w) < 2:
        return []
    lo, hi = [], []
    for k in range(1, int(max_inside) + 2):
        if k >= len(w):
            break
        lo.append(np.arange(len(w) - k))
        hi.append(lo[-1] + k)
    lo, hi = np.concatenate(lo), np.concatenate(hi)
    width = w[hi] - w[lo]
    out = []
    for c in np.argsort(-width, kind="stable"):
        if len(out) == count or width[c] <= min_width:
            break
        if any(lo[c] < b and a < hi[c] for a, b in out):
            continue
        out.append((lo[c], hi[c]))
    return [Gap(float(w[a]), float(w[b])) for a, b in out]


def low_density_gaps(eigs, window=None, count: int = 2, levels: int = 10, ratio: float = 3.0,
                     trim: float = 0.02):
    """Intervals of low spectral density (mobility-gap candidates), widest first.

    The local level spacing is averaged over ``levels`` consecutive
    eigenvalues; a gap is a maximal run of such windows whose mean spacing
    exceeds ``ratio`` times the median one.  Unlike :func:`find_gaps` this
    tolerates gaps that are filled with a sparse set of states.  ``trim``
    drops that fraction of the spectrum at each end (band tails).
    """
    if int(levels) != levels or levels < 1:
        raise InvalidParameter(f"levels must be a positive integer, got {levels}")
    if not ratio > 1:
        raise InvalidParameter(f"ratio must exceed 1, got {ratio}")
    if not 0 <= trim < 0.5:
        raise InvalidParameter(f"trim must lie in [0, 0.5), got {trim}")
    w = np.sort(np.asarray(eigs, dtype=float))
    cut = int(math.floor(trim * len(w)))
    w = w[cut:len(w) - cut]
    if window is not None:
        w = w[(w >= window[0]) & (w <= window[1])]
    k = int(levels)
    if len(w) <= k:
        return []
    mean_sp = (w[k:] - w[:-k]) / k
    sparse = mean_sp > ratio * np.median(mean_sp)
    # run boundaries of the boolean mask
    edges = np.flatnonzero(np.diff(np.concatenate([[0], sparse.astype(np.int8), [0]])))
    gaps = [Gap(float(w[a]), float(w[b - 1 + k])) for a, b in zip(edges[0::2], edges[1::2])]
    gaps.sort(key=lambda g: -g.width)
    return gaps[:count]


def gap_at(eigs, E: float) -> Gap | None:
    """Spectral gap containing ``E`` (``None`` if ``E`` is outside the spectrum's hull)."""
    w = np.sort(np.asarray(eigs, dtype=float))
    k = int(np.searchsorted(w, E, side="right"))
    if k == 0 or k == len(w):
        return None
    return Gap(float(w[k - 1]), float(w[k]))


@dataclass(frozen=True, eq=False)
class ButterflyRow:
    n: int
    theta: float
    eigenvalues: np.ndarray
    gaps: list


def spectrum_butterfly(pattern, rule: HoppingRule | None = None, flux_indices=range(0, 1),
                       window=None, gap_count: int = 2, threads: int = 1,
                       gap_method: str = "spacing", **gap_options):
    """Spectra for each flux index, with the widest gaps inside ``window``.

    ``gap_method='spacing'`` reports the largest level spacings
    (:func:`find_gaps`); ``'density'`` reports low-density intervals
    (:func:`low_density_gaps`).  Extra keywords go to the chosen detector.

    Rows come back in the order of ``flux_indices`` regardless of ``threads``.
    """
    rule = HoppingRule() if rule is None else rule
    ns = [int(n) for n in flux_indices]
    if not ns:
        raise InvalidParameter("empty flux index range")

    detectors = {"spacing": find_gaps, "density": low_density_gaps}
    if gap_method not in detectors:
        raise InvalidParameter(f"gap_method must be 'spacing' or 'density', got {gap_method!r}")
    detect = detectors[gap_method]

    def one(n):
        fx = FluxIndex(n, pattern.L)
        w = eigenvalues(build_hamiltonian(pattern, rule, fx))
        return ButterflyRow(n, fx.theta, w, detect(w, window, gap_count, **gap_options))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, ns))
    return [one(n) for n in ns]


def gap_report(rows):
    """Flatten the gaps of butterfly rows into ``(n, theta, low, high, width)`` tuples."""
    return [(r.n, r.theta, g.low, g.high, g.width) for r in rows for g in r.gaps]


def dos(spec, bins: int, window=None):
    """Normalized histogram of eigenvalues; returns ``(weights, edges)``."""
    if int(bins) != bins or bins < 1:
        raise InvalidParameter(f"bins must be a positive integer, got {bins}")
    w = spec.eigenvalues if isinstance(spec, SpectralData) else np.asarray(spec, dtype=float)
    if window is None:
        window = (float(w.min()), float(w.max())) if len(w) else (0.0, 1.0)
        if window[0] == window[1]:
            window = (window[0] - 0.5, window[1] + 0.5)
    counts, edges = np.histogram(w, bins=int(bins), range=window)
    total = counts.sum()
    weights = counts / total if total else counts.astype(float)
    return weights, edges


def _fmt(x) -> str:
    return repr(float(x))


def write_butterfly_csv(rows, path) -> None:
    with open(os.fspath(path), "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["n", "theta", "k", "E_k"])
        for r in rows:
            for k, e in enumerate(r.eigenvalues):
                out.writerow([r.n, _fmt(r.theta), k, _fmt(e)])


def write_gap_csv(rows, path) -> None:
    with open(os.fspath(path), "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["n", "theta", "gap_low", "gap_high", "width"])
        for n, theta, lo, hi, width in gap_report(rows):
            out.writerow([n, _fmt(theta), _fmt(lo), _fmt(hi), _fmt(width)])
