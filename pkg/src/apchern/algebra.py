"""Finite-volume twisted groupoid algebra of a point pattern.

A covariant kernel ``k(x, y)`` on a torus pattern stands for the groupoid
function ``f(L - x, y - x)``.  Displacements entering fluxes are minimal
image.  The canonical representation multiplies ``k`` by unit phases
``exp(-i P(x, y))`` with

    P(x, y) = G(x, y + L m) + G(y, L m),    G(u, v) = 1/2 u.B.v,

where ``y + L m`` is the image of ``y`` nearest to ``x``.  The first term is
the plane phase ``G(x, y~)``; the second is the gauge factor carried by the
magnetic translation that identifies ``y + L m`` with ``y``.  The matrix is
Hermitian for every pattern, every loop that does not wind around the torus
picks up the flux through its enclosed area, and for integer lattices at
quantized flux the correction term is a multiple of 2 pi.

Matrices acting on ``l2(pattern)`` are plain complex ndarrays in the point
order of the pattern.
"""
from __future__ import annotations

import itertools
import os
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, NotALatticePoint, PatternMismatch
from .pattern import DelonePattern, pairwise_displacement, torus_distance

__all__ = [
    "MagneticField", "CovariantKernel", "triangle_flux", "flux_through", "cocycle",
    "gauge_phase", "represent", "convolve", "involution", "derivation",
    "magnetic_translation", "trace_per_volume", "sobolev_norm", "sobolev_norm_matrix",
    "wrapped_commutator", "multi_indices", "write_kernel", "read_kernel",
]

OperatorMatrix = np.ndarray


@dataclass(frozen=True, eq=False)
class MagneticField:
    """Constant magnetic 2-form stored as an antisymmetric ``d x d`` matrix."""

    B: np.ndarray

    def __post_init__(self):
        B = np.array(self.B, dtype=float, copy=True)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise InvalidParameter(f"B must be square, got shape {B.shape}")
        if np.any(B + B.T != 0):
            raise InvalidParameter("B must be exactly antisymmetric")
        B.setflags(write=False)
        object.__setattr__(self, "B", B)

    @classmethod
    def from_strength(cls, theta: float) -> "MagneticField":
        """Planar field ``[[0, theta], [-theta, 0]]``."""
        return cls(np.array([[0.0, theta], [-theta, 0.0]]))

    @classmethod
    def zero(cls, d: int) -> "MagneticField":
        return cls(np.zeros((d, d)))

    @property
    def d(self) -> int:
        return self.B.shape[0]

    @property
    def strength(self) -> float:
        if self.d != 2:
            raise InvalidParameter("scalar strength only defined for d = 2")
        return float(self.B[0, 1])

    def pairs(self):
        """Nonzero upper-triangle entries ``(j, k, B_jk)``."""
        return [(j, k, self.B[j, k]) for j in range(self.d) for k in range(j + 1, self.d)
                if self.B[j, k] != 0.0]


def triangle_flux(field: MagneticField, x, y):
    """Flux through the triangle ``<0, x, y>``: ``1/2 sum_{j<k} B_jk (x_j y_k - x_k y_j)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1])
    for j, k, b in field.pairs():
        out = out + 0.5 * b * (x[..., j] * y[..., k] - x[..., k] * y[..., j])
    return out


def flux_through(field: MagneticField, a, b, c):
    """Flux through the triangle ``<a, b, c>`` (translation invariant)."""
    a = np.asarray(a, dtype=float)
    return triangle_flux(field, np.asarray(b) - a, np.asarray(c) - a)


def cocycle(field: MagneticField, x, y):
    """Twist ``exp(-i Flux<0, x, x + y>)`` of the composable pair ``((L, x), (L - x, y))``."""
    x = np.asarray(x, dtype=float)
    return np.exp(-1j * triangle_flux(field, x, x + np.asarray(y, dtype=float)))


# ----------------------------------------------------------------------------
# kernels

def _check_same(p1: DelonePattern, p2: DelonePattern):
    if p1 is not p2 and not p1.same_as(p2):
        raise PatternMismatch("kernels live on different patterns")


@dataclass(frozen=True, eq=False)
class CovariantKernel:
    """Kernel ``k(x, y)`` of a finite-range groupoid function on one pattern.

    ``values`` is dense ``(N, N)``; ``range`` records the support radius in
    torus distance (``None`` for unrestricted).
    """

    pattern: DelonePattern
    values: np.ndarray
    range: float | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=complex, copy=True)
        n = self.pattern.n
        if v.shape != (n, n):
            raise InvalidParameter(f"kernel must be {n}x{n}, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def unit(cls, pattern):
        return cls(pattern, np.eye(pattern.n), range=0.0)

    @classmethod
    def zero(cls, pattern):
        return cls(pattern, np.zeros((pattern.n, pattern.n)), range=0.0)

    @classmethod
    def radial(cls, pattern, amplitude, cutoff=None):
        """``k(x, y) = amplitude(torus_distance(x, y))``, zero beyond ``cutoff``."""
        dist = _distances(pattern)
        vals = np.asarray(amplitude(dist), dtype=complex)
        if cutoff is not None:
            vals = np.where(dist <= cutoff, vals, 0.0)
        return cls(pattern, vals, range=cutoff)

    @classmethod
    def from_function(cls, pattern, func, cutoff=None):
        """``k(x, y) = func(x, d)`` with ``x`` the row position and ``d`` the
        minimal-image displacement ``y - x``; both arrays of shape ``(N, N, d)``."""
        disp = np.stack([-pairwise_displacement(pattern, j) for j in range(pattern.d)], -1)
        xpos = np.broadcast_to(pattern.points[:, None, :], disp.shape)
        vals = np.asarray(func(xpos, disp), dtype=complex)
        if cutoff is not None:
            vals = np.where(np.sqrt((disp ** 2).sum(-1)) <= cutoff, vals, 0.0)
        return cls(pattern, vals, range=cutoff)

    @property
    def n(self) -> int:
        return self.pattern.n

    @property
    def hermitian(self) -> bool:
        return bool(np.array_equal(self.values, self.values.conj().T))

    def _combine(self, other, values, rng):
        return CovariantKernel(self.pattern, values, range=rng)

    def __add__(self, other):
        _check_same(self.pattern, other.pattern)
        rng = None if self.range is None or other.range is None else max(self.range, other.range)
        return CovariantKernel(self.pattern, self.values + other.values, range=rng)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, c):
        return CovariantKernel(self.pattern, c * self.values, range=self.range)

    __rmul__ = __mul__


def _distances(pattern):
    sq = sum(pairwise_displacement(pattern, j) ** 2 for j in range(pattern.d))
    return np.sqrt(sq)


def _check_field(pattern, field):
    if field is None:
        return MagneticField.zero(pattern.d)
    if field.d != pattern.d:
        raise InvalidParameter(f"field is {field.d}-dimensional, pattern is {pattern.d}-dimensional")
    return field


def gauge_phase(pattern: DelonePattern, field: MagneticField | None = None) -> np.ndarray:
    """Unit-modulus matrix ``exp(-i P(x, y))`` of the torus representation."""
    field = _check_field(pattern, field)
    n, L = pattern.n, pattern.L
    pairs = field.pairs()
    if not pairs:
        return np.ones((n, n), dtype=complex)
    x = pattern.points
    # ytilde_j = x_j + (y - x)_j wrapped; image shift L m_j = ytilde_j - y_j
    yt, shift = [], []
    for j in range(pattern.d):
        dyx = -pairwise_displacement(pattern, j)
        yt.append(x[:, j][:, None] + dyx)
        shift.append(L * np.round((yt[j] - x[:, j][None, :]) / L))
    P = np.zeros((n, n))
    for j, k, b in pairs:
        P += 0.5 * b * (x[:, j][:, None] * yt[k] - x[:, k][:, None] * yt[j])
        P += 0.5 * b * (x[:, j][None, :] * shift[k] - x[:, k][None, :] * shift[j])
    P = 0.5 * (P - P.T)
    return np.cos(P) - 1j * np.sin(P)


def represent(f: CovariantKernel, field: MagneticField | None = None) -> OperatorMatrix:
    """Canonical representation of ``f`` on ``l2(pattern)`` (zero field by default)."""
    return gauge_phase(f.pattern, field) * f.values


def _displacements_from(pattern):
    """``(N, N, d)`` array with ``[x, y] = y - x`` minimal image."""
    return np.stack([-pairwise_displacement(pattern, j) for j in range(pattern.d)], -1)


def convolve(f1: CovariantKernel, f2: CovariantKernel,
             field: MagneticField | None = None) -> CovariantKernel:
    """Twisted convolution.

    ``k(x, z) = sum_y k1(x, y) k2(y, z) exp(-i Flux<0, y - x, z - x>)``;
    without ``field`` the product is untwisted.
    """
    _check_same(f1.pattern, f2.pattern)
    pattern = f1.pattern
    field = _check_field(pattern, field)
    n = pattern.n
    k1, k2 = f1.values, f2.values
    pairs = field.pairs()
    if not pairs:
        out = k1 @ k2
    else:
        disp = _displacements_from(pattern)
        out = np.empty((n, n), dtype=complex)
        chunk = max(1, int(4_000_000 // max(1, n * n)))
        for start in range(0, n, chunk):
            a = disp[start:start + chunk]               # (c, N, d): y - x
            flux = np.zeros((a.shape[0], n, n))
            for j, k, b in pairs:
                flux += 0.5 * b * (a[:, :, None, j] * a[:, None, :, k]
                                   - a[:, :, None, k] * a[:, None, :, j])
            twist = np.exp(-1j * flux)                  # [x, y, z]
            out[start:start + chunk] = np.einsum("cy,yz,cyz->cz", k1[start:start + chunk], k2, twist)
    rng = None if f1.range is None or f2.range is None else f1.range + f2.range
    return CovariantKernel(pattern, out, range=rng)


def involution(f: CovariantKernel) -> CovariantKernel:
    """``k*(x, y) = conj(k(y, x))``."""
    return CovariantKernel(f.pattern, f.values.conj().T, range=f.range)


def derivation(f: CovariantKernel, axis: int) -> CovariantKernel:
    """``(d_j k)(x, y) = (y - x)_j k(x, y)`` with the minimal-image displacement.

    ``axis`` is zero-based.
    """
    if not 0 <= axis < f.pattern.d:
        raise InvalidParameter(f"axis must lie in [0, {f.pattern.d}), got {axis}")
    return CovariantKernel(f.pattern, -pairwise_displacement(f.pattern, axis) * f.values,
                           range=f.range)


def wrapped_commutator(M: OperatorMatrix, pattern: DelonePattern, axis: int) -> OperatorMatrix:
    """Periodic substitute for ``[X_j, M]``: entries ``(x - y)_j M[x, y]`` with the
    minimal-image displacement.  ``represent(derivation(f, j)) == -wrapped_commutator(...)``.
    """
    return pairwise_displacement(pattern, axis) * M


def magnetic_translation(pattern: DelonePattern, a, field: MagneticField | None = None,
                         atol: float = 1e-12):
    """Magnetic translation onto the pattern re-centred at the point ``a``.

    Returns ``(T, translated)`` where ``translated = translate_pattern(pattern, a)``
    keeps the point order, so ``T`` is diagonal with entries ``exp(i G(x', a))``
    for ``x'`` the wrapped positions of the translated pattern.
    """
    from .pattern import translate_pattern

    a = np.asarray(a, dtype=float)
    field = _check_field(pattern, field)
    if pattern.n == 0 or np.min(torus_distance(pattern.points, a, pattern.L)) > atol:
        raise NotALatticePoint(f"{a.tolist()} is not a point of the pattern")
    moved = translate_pattern(pattern, a)
    phases = np.exp(1j * triangle_flux(field, moved.points, a))
    return np.diag(phases), moved


def trace_per_volume(M: OperatorMatrix, n_sites: int | None = None) -> complex:
    """``Tr(M) / N``; ``n_sites`` overrides ``N`` when sites carry internal states."""
    n = M.shape[0] if n_sites is None else n_sites
    return complex(np.trace(M)) / n


def multi_indices(d: int, r: int):
    """All ``alpha`` in ``N^d`` with ``|alpha| <= r``, ordered by degree."""
    out = []
    for deg in range(r + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            alpha = [0] * d
            for j in combo:
                alpha[j] += 1
            out.append(tuple(alpha))
    return out


def sobolev_norm_matrix(M: OperatorMatrix, pattern: DelonePattern, r: int, p: int) -> float:
    """Finite-volume ``sum_{|alpha|<=r} T(|d^alpha M|^p)^(1/p)`` from a represented matrix.

    The derivations act on represented matrices as Hadamard products with real
    displacement powers, so no field is needed here.
    """
    if r < 0 or p < 1:
        raise InvalidParameter("need r >= 0 and p >= 1")
    n = M.shape[0]
    if n == 0:
        return 0.0
    disp = [-pairwise_displacement(pattern, j) for j in range(pattern.d)] if r else []
    total = 0.0
    for alpha in multi_indices(pattern.d, r):
        A = M
        for j, power in enumerate(alpha):
            if power:
                A = A * disp[j] ** power
        if p == 2:
            tr = float(np.vdot(A, A).real) / n
        else:
            sv = np.linalg.svd(A, compute_uv=False)
            tr = float(np.sum(sv ** p)) / n
        total += tr ** (1.0 / p)
    return total


def sobolev_norm(f: CovariantKernel, r: int, p: int, field: MagneticField | None = None) -> float:
    """Sobolev norm ``||f||_{r,p}`` of a kernel in its canonical representation."""
    return sobolev_norm_matrix(represent(f, field), f.pattern, r, p)


# ----------------------------------------------------------------------------
# triplet export

def write_kernel(values, pattern: DelonePattern, path, atol: float = 0.0) -> None:
    """Write ``x_index, y_index, re, im`` rows for entries with ``|v| > atol``."""
    values = values.values if isinstance(values, CovariantKernel) else np.asarray(values)
    ii, jj = np.nonzero(np.abs(values) > atol)
    with open(os.fspath(path), "w") as fh:
        fh.write(f"# pattern={pattern.fingerprint()} n={pattern.n}\n")
        for i, j in zip(ii, jj):
            v = values[i, j]
            fh.write(f"{i}, {j}, {v.real:.17g}, {v.imag:.17g}\n")


def read_kernel(path, pattern: DelonePattern) -> np.ndarray:
    """Inverse of :func:`write_kernel`; checks the pattern fingerprint."""
    with open(os.fspath(path)) as fh:
        header = fh.readline()
        meta = dict(tok.split("=", 1) for tok in header.lstrip("#").split())
        if meta.get("pattern") != pattern.fingerprint():
            raise PatternMismatch("kernel file was written for a different pattern")
        n = int(meta["n"])
        out = np.zeros((n, n), dtype=complex)
        for line in fh:
            if not line.strip():
                continue
            i, j, re, im = line.split(",")
            out[int(i), int(j)] = float(re) + 1j * float(im)
    return out
