"""Random instances and identity residuals shared by the algebra tests."""
import math

import numpy as np

from apchern.algebra import (CovariantKernel, MagneticField, cocycle, convolve, derivation,
                             involution, represent, trace_per_volume)
from apchern.pattern import DelonePattern, TorusGeometry, pairwise_distance


def quantized_field(rng, L, d):
    """Random constant field with every B_jk L^2 / 2 pi an even integer."""
    B = np.zeros((d, d))
    for j in range(d):
        for k in range(j + 1, d):
            B[j, k] = 4 * math.pi * int(rng.integers(-L, L + 1)) / L
            B[k, j] = -B[j, k]
    return MagneticField(B)


def random_pattern(rng, n_max=20, L_range=(3, 10), d=None):
    d = int(rng.integers(1, 4)) if d is None else d
    L = int(rng.integers(L_range[0], L_range[1] + 1))
    N = int(rng.integers(2, n_max + 1))
    pts = rng.uniform(0, L, size=(N, d))
    return DelonePattern(TorusGeometry(L, d), pts)


def random_kernel(rng, pattern, rho):
    n = pattern.n
    vals = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / math.sqrt(2)
    vals[pairwise_distance(pattern) > rho] = 0.0
    return CovariantKernel(pattern, vals, range=rho)


def _maxabs(a):
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def cocycle_residual(rng):
    """Cocycle identity and both unit conditions on one random triple."""
    d = int(rng.integers(1, 4))
    L = int(rng.integers(3, 11))
    field = quantized_field(rng, L, d)
    x, y, z = rng.uniform(-L, L, size=(3, d))
    lhs = cocycle(field, x, y) * cocycle(field, x + y, z)
    rhs = cocycle(field, x, y + z) * cocycle(field, y, z)
    zero = np.zeros(d)
    return max(abs(lhs - rhs), abs(cocycle(field, x, zero) - 1), abs(cocycle(field, zero, y) - 1),
               abs(cocycle(field, x, -x) - 1)), 1


def associativity_residual(rng, n_max=20):
    p = random_pattern(rng, n_max)
    field = quantized_field(rng, int(p.L), p.d)
    f1, f2, f3 = (random_kernel(rng, p, p.L / 7) for _ in range(3))
    a = convolve(convolve(f1, f2, field), f3, field).values
    b = convolve(f1, convolve(f2, f3, field), field).values
    return _maxabs(a - b), p.n


def involution_residual(rng, n_max=20):
    p = random_pattern(rng, n_max)
    field = quantized_field(rng, int(p.L), p.d)
    f, g = (random_kernel(rng, p, p.L / 4.5) for _ in range(2))
    a = involution(convolve(f, g, field)).values
    b = convolve(involution(g), involution(f), field).values
    return _maxabs(a - b), p.n


def multiplicativity_residual(rng, n_max=20):
    p = random_pattern(rng, n_max)
    field = quantized_field(rng, int(p.L), p.d)
    f, g = (random_kernel(rng, p, p.L / 4.5) for _ in range(2))
    a = represent(convolve(f, g, field), field)
    b = represent(f, field) @ represent(g, field)
    adj = represent(involution(f), field) - represent(f, field).conj().T
    return max(_maxabs(a - b), _maxabs(adj)), p.n


def leibniz_residual(rng, n_max=20):
    p = random_pattern(rng, n_max)
    field = quantized_field(rng, int(p.L), p.d)
    f, g = (random_kernel(rng, p, p.L / 4.5) for _ in range(2))
    worst = 0.0
    for j in range(p.d):
        lhs = derivation(convolve(f, g, field), j).values
        rhs = (convolve(derivation(f, j), g, field) + convolve(f, derivation(g, j), field)).values
        worst = max(worst, _maxabs(lhs - rhs))
    return worst, p.n


def cyclicity_residual(rng, n_max=20):
    p = random_pattern(rng, n_max)
    field = quantized_field(rng, int(p.L), p.d)
    f, g = (random_kernel(rng, p, rng.uniform(0, p.L)) for _ in range(2))
    a = trace_per_volume(represent(convolve(f, g, field), field))
    b = trace_per_volume(represent(convolve(g, f, field), field))
    return abs(a - b), p.n


IDENTITIES = {
    "cocycle": cocycle_residual,
    "associativity": associativity_residual,
    "involution": involution_residual,
    "multiplicativity": multiplicativity_residual,
    "leibniz": leibniz_residual,
    "cyclicity": cyclicity_residual,
}


def covariance_residual(rng, L_range=(4, 8)):
    """``||T_a pi(f) T_a^* - pi(f on the translated pattern)||_max`` on a lattice at quantized flux.

    ``f`` is a random translation-invariant kernel: its value depends only on the
    integer displacement.
    """
    from apchern.algebra import magnetic_translation
    from apchern.pattern import periodic_lattice

    L = int(rng.integers(L_range[0], L_range[1] + 1))
    p = periodic_lattice(TorusGeometry(L, 2))
    field = MagneticField.from_strength(4 * math.pi * int(rng.integers(-L, L + 1)) / L)
    coeff = {}

    def func(x, d):
        key = np.round(d).astype(int)
        out = np.zeros(d.shape[:-1], dtype=complex)
        for idx in np.ndindex(out.shape):
            k = tuple(key[idx])
            if k not in coeff:
                coeff[k] = complex(rng.normal(), rng.normal())
            out[idx] = coeff[k]
        return out

    f = CovariantKernel.from_function(p, func, cutoff=L / 4)
    a = p.points[int(rng.integers(p.n))]
    T, moved = magnetic_translation(p, a, field)
    g = CovariantKernel.from_function(moved, func, cutoff=L / 4)
    lhs = T @ represent(f, field) @ T.conj().T
    return _maxabs(lhs - represent(g, field))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = []
