"""Delone point patterns on the flat d-torus.

The amorphous ensemble is a random sequential deposition of hard disks of
diameter ``d_min`` at unit density: proposals are uniform on the torus and a
proposal closer than ``d_min`` (torus metric) to an accepted point is dropped.
At ``d_min = 0.83`` this sits just below the jamming coverage of the process,
so naive rejection stalls for the last few points.  The sampler therefore
draws proposals uniformly from a shrinking set of *live* sub-cells, discarding
sub-cells that lie entirely inside one exclusion disk.  Conditioning a uniform
proposal on a superset of the available region does not change the law of
the accepted point, so the output has exactly the distribution of the plain
rejection scheme.
"""
from __future__ import annotations

import io
import itertools
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (AttemptsExhausted, InvalidParameter,
                     RelativeDensityWarning)

__all__ = [
    "TorusGeometry", "DelonePattern", "PatternEnsemble", "DeloneReport",
    "generate_pattern", "periodic_lattice", "chain_pattern",
    "torus_displacement", "torus_distance", "pairwise_displacement",
    "pairwise_distance", "min_pair_distance", "largest_hole_estimate",
    "verify_delone", "translate_pattern", "save_pattern", "load_pattern",
    "dumps_pattern", "loads_pattern",
    "DEFAULT_D_MAX",
]

DEFAULT_D_MAX = 4.0
KINDS = ("amorphous", "periodic", "custom")


@dataclass(frozen=True)
class TorusGeometry:
    """Flat d-torus ``[0, L)^d`` with opposite faces identified."""

    L: float
    d: int = 2

    def __post_init__(self):
        if not self.L > 0:
            raise InvalidParameter(f"side length must be positive, got {self.L}")
        if int(self.d) != self.d or self.d < 1:
            raise InvalidParameter(f"dimension must be a positive integer, got {self.d}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "d", int(self.d))

    @property
    def volume(self) -> float:
        return self.L ** self.d

    @property
    def unit_density_count(self) -> int:
        return int(round(self.volume))


@dataclass(frozen=True, eq=False)
class DelonePattern:
    """Immutable finite point set on a torus plus its generation record.

    ``points`` has shape ``(N, d)`` and every coordinate lies in ``[0, L)``.
    The array is flagged read-only.
    """

    geometry: TorusGeometry
    points: np.ndarray
    d_min: float = 0.0
    d_max: float | None = None
    seed: int | None = None
    kind: str = "custom"
    attempts: int | None = field(default=None, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if self.geometry.d == 1 else pts.reshape(1, -1)
        if pts.ndim != 2 or pts.shape[1] != self.geometry.d:
            raise InvalidParameter(
                f"points must have shape (N, {self.geometry.d}), got {pts.shape}")
        if pts.size and (pts.min() < 0.0 or pts.max() >= self.geometry.L):
            raise InvalidParameter("coordinates must lie in [0, L)")
        if self.kind not in KINDS:
            raise InvalidParameter(f"kind must be one of {KINDS}, got {self.kind!r}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def L(self) -> float:
        return self.geometry.L

    @property
    def d(self) -> int:
        return self.geometry.d

    def same_as(self, other: "DelonePattern") -> bool:
        """Bitwise equality of geometry and point list."""
        return (self.geometry == other.geometry
                and self.points.shape == other.points.shape
                and np.array_equal(self.points, other.points))

    def fingerprint(self) -> str:
        """Short hex digest of geometry and coordinates, for integrity headers."""
        import hashlib
        h = hashlib.sha256()
        h.update(f"{self.geometry.L!r}:{self.geometry.d}".encode())
        h.update(np.ascontiguousarray(self.points).tobytes())
        return h.hexdigest()[:16]


# ----------------------------------------------------------------------------
# torus metric

def _side(geometry) -> float:
    return geometry.L if isinstance(geometry, TorusGeometry) else float(geometry)


def torus_displacement(x, y, geometry):
    """Minimal-image displacement ``x - y`` on the torus.

    Each component is ``D - L * trunc(2 D / L)`` with ``D = x_j - y_j``, the
    integer part taken toward zero.  For fundamental-domain inputs the result
    lies in ``[-L/2, L/2]``; an exact tie ``D = +L/2`` maps to ``-L/2`` and
    ``D = -L/2`` maps to ``+L/2``, so the map stays odd under ``x <-> y``.
    Broadcasts over leading axes.
    """
    L = _side(geometry)
    delta = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return delta - L * np.trunc(2.0 * delta / L)


def torus_distance(x, y, geometry):
    """Euclidean norm of :func:`torus_displacement` (over the last axis)."""
    disp = torus_displacement(x, y, geometry)
    return np.sqrt(np.sum(np.atleast_1d(disp) ** 2, axis=-1)) if np.ndim(disp) else abs(disp)


def pairwise_displacement(pattern: DelonePattern, axis: int) -> np.ndarray:
    """Matrix ``D[i, j] = torus_displacement(p_i, p_j)[axis]``."""
    c = pattern.points[:, axis]
    return torus_displacement(c[:, None], c[None, :], pattern.L)


def pairwise_distance(pattern: DelonePattern) -> np.ndarray:
    sq = np.zeros((pattern.n, pattern.n))
    for j in range(pattern.d):
        sq += pairwise_displacement(pattern, j) ** 2
    return np.sqrt(sq)


def min_pair_distance(pattern: DelonePattern) -> float:
    """Smallest torus distance between distinct points (inf for N < 2)."""
    if pattern.n < 2:
        return np.inf
    tree = cKDTree(pattern.points, boxsize=pattern.L)
    dist, _ = tree.query(pattern.points, k=2)
    return float(dist[:, 1].min())


# ----------------------------------------------------------------------------
# hard-disk sampler

class _CellGrid:
    """Bucket grid with cell side >= d_min, so conflicts sit in the 3^d block."""

    def __init__(self, L, d, d_min, n_max):
        nc = max(1, int(np.floor(L / d_min)))
        nc = min(nc, max(1, int(np.ceil((4 * n_max) ** (1.0 / d)))))
        self.L, self.d, self.d_min = L, d, d_min
        self.nc = nc
        self.cell = L / nc
        self.cap = 4
        self.slots = -np.ones((nc ** d, self.cap), dtype=np.int64)
        self.count = np.zeros(nc ** d, dtype=np.int64)
        self.points = np.empty((n_max, d))
        self.n = 0
        self.offsets = np.array(list(itertools.product((-1, 0, 1), repeat=d)))
        self.strides = nc ** np.arange(d)[::-1]

    def _cell_of(self, x):
        return np.minimum((x // self.cell).astype(np.int64), self.nc - 1)

    def _neighbour_ids(self, x):
        c = self._cell_of(x)
        return (((c[..., None, :] + self.offsets) % self.nc) * self.strides).sum(-1)

    def _gather(self, x):
        ids = self._neighbour_ids(x)
        cand = self.slots[ids].reshape(x.shape[0], -1)
        valid = cand >= 0
        disp = x[:, None, :] - self.points[np.where(valid, cand, 0)]
        disp -= self.L * np.round(disp / self.L)
        return disp, valid

    def conflicts(self, x):
        """Boolean mask: proposal closer than d_min to a stored point."""
        if self.n == 0:
            return np.zeros(x.shape[0], dtype=bool)
        disp, valid = self._gather(x)
        close = np.einsum("ijk,ijk->ij", disp, disp) < self.d_min ** 2
        return (close & valid).any(axis=1)

    def covered(self, corners, h):
        """Mask of sub-cells ``[a, a+h]^d`` lying inside a single exclusion disk."""
        if self.n == 0:
            return np.zeros(corners.shape[0], dtype=bool)
        out = np.zeros(corners.shape[0], dtype=bool)
        for start in range(0, corners.shape[0], 65536):
            centre = corners[start:start + 65536] + 0.5 * h
            disp, valid = self._gather(centre)
            far = np.abs(disp) + 0.5 * h
            inside = np.einsum("ijk,ijk->ij", far, far) < self.d_min ** 2
            out[start:start + 65536] = (inside & valid).any(axis=1)
        return out

    def add(self, x):
        cid = int((self._cell_of(x) * self.strides).sum())
        if self.count[cid] == self.cap:
            grown = -np.ones((self.slots.shape[0], 2 * self.cap), dtype=np.int64)
            grown[:, :self.cap] = self.slots
            self.slots, self.cap = grown, 2 * self.cap
        self.slots[cid, self.count[cid]] = self.n
        self.count[cid] += 1
        self.points[self.n] = x
        self.n += 1


def _deposit(rng, n_target, L, d, d_min, max_attempts):
    """Sequential hard-disk deposition; returns (points, proposals consumed)."""
    if d_min == 0.0:
        pts = rng.random((n_target, d)) * L
        return pts, n_target
    grid = _CellGrid(L, d, d_min, n_target)
    h = grid.cell
    live = np.indices((grid.nc,) * d).reshape(d, -1).T * h
    top = np.nextafter(L, 0.0)
    attempts = 0
    while grid.n < n_target:
        if live.shape[0] == 0:
            raise AttemptsExhausted(
                f"pattern jammed at {grid.n} of {n_target} points "
                f"(d_min={d_min} too large for unit density)")
        batch = int(min(max(256, 2 * (n_target - grid.n)), 1 << 15))
        pick = rng.integers(0, live.shape[0], size=batch)
        prop = np.minimum(live[pick] + rng.random((batch, d)) * h, top)
        free = ~grid.conflicts(prop)
        consumed = batch
        for i in np.flatnonzero(free):
            if grid.conflicts(prop[i:i + 1])[0]:
                continue
            grid.add(prop[i])
            if grid.n == n_target:
                consumed = i + 1
                break
        attempts += consumed
        if grid.n < n_target and attempts >= max_attempts:
            raise AttemptsExhausted(
                f"{attempts} proposals consumed with {grid.n} of {n_target} points placed")
        live = live[~grid.covered(live, h)]
        if free.mean() < 0.25 and h > d_min / 256:
            h *= 0.5
            shifts = np.array(list(itertools.product((0.0, h), repeat=d)))
            live = (live[:, None, :] + shifts).reshape(-1, d)
            live = live[~grid.covered(live, h)]
    return grid.points, attempts


def largest_hole_estimate(points, L, spacing) -> tuple[float, np.ndarray]:
    """Max over a centre grid (step <= ``spacing``) of the distance to the nearest point.

    Returns the estimate and the grid centre attaining it.
    """
    points = np.asarray(points, dtype=float)
    d = points.shape[1]
    m = max(1, int(np.ceil(L / spacing)))
    axis = (np.arange(m) + 0.5) * (L / m)
    centres = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), -1).reshape(-1, d)
    if points.shape[0] == 0:
        return np.inf, centres[:1]
    tree = cKDTree(points, boxsize=L)
    dist = np.empty(centres.shape[0])
    for start in range(0, centres.shape[0], 1 << 18):
        dist[start:start + (1 << 18)] = tree.query(centres[start:start + (1 << 18)])[0]
    k = int(np.argmax(dist))
    return float(dist[k]), centres[k]


def generate_pattern(geometry: TorusGeometry, d_min: float, d_max: float | None = DEFAULT_D_MAX,
                     seed: int = 0, max_attempts: int | None = None,
                     strict: bool = False, max_restarts: int = 50) -> DelonePattern:
    """Amorphous hard-disk pattern with exactly ``round(L**d)`` points.

    Parameters
    ----------
    geometry : TorusGeometry
    d_min : float
        Hard-core distance; ``0 <= d_min <= 1`` at unit density.
    d_max : float or None
        Relative-density radius.  After deposition the largest empty ball is
        estimated on a grid of step ``d_max / 8``; if it exceeds ``d_max`` a
        :class:`RelativeDensityWarning` is issued, or, with ``strict=True``,
        the pattern is discarded and deposition restarts on the advanced
        random stream.
    seed : int
        Key of the Philox counter-based generator.  The output is a pure
        function of all arguments.
    max_attempts : int, optional
        Proposal budget, default ``1000 * L**d``.

    Raises
    ------
    InvalidParameter
        For ``d_min`` outside ``[0, 1]`` or ``d_max <= d_min``.
    AttemptsExhausted
        When the budget runs out or the deposition jams short of N points.
    """
    if not 0.0 <= d_min <= 1.0:
        raise InvalidParameter(f"d_min must lie in [0, 1] at unit density, got {d_min}")
    if d_max is not None and not d_max > d_min:
        raise InvalidParameter(f"d_max must exceed d_min, got {d_max} <= {d_min}")
    n_target = geometry.unit_density_count
    if max_attempts is None:
        max_attempts = 1000 * n_target
    if max_attempts <= 0:
        raise InvalidParameter("max_attempts must be positive")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    total = 0
    for _ in range(max_restarts):
        pts, used = _deposit(rng, n_target, geometry.L, geometry.d, float(d_min), max_attempts)
        total += used
        if d_max is None:
            break
        hole, _ = largest_hole_estimate(pts, geometry.L, d_max / 8.0)
        if hole <= d_max:
            break
        if not strict:
            warnings.warn(f"largest empty ball ~{hole:.3f} exceeds d_max={d_max}",
                          RelativeDensityWarning, stacklevel=2)
            break
    else:
        raise AttemptsExhausted(f"no {d_max}-relatively dense pattern in {max_restarts} restarts")
    return DelonePattern(geometry, pts, d_min=float(d_min), d_max=d_max, seed=int(seed),
                         kind="amorphous", attempts=total)


@dataclass(frozen=True)
class PatternEnsemble:
    """Reproducible family of amorphous patterns indexed by sample number."""

    geometry: TorusGeometry
    d_min: float
    d_max: float | None = DEFAULT_D_MAX
    seed: int = 0
    count: int = 1

    def sample_seed(self, index: int) -> int:
        if not 0 <= index < self.count:
            raise IndexError(index)
        ss = np.random.SeedSequence([int(self.seed), int(index)])
        return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))

    def __len__(self):
        return self.count

    def __getitem__(self, index: int) -> DelonePattern:
        return generate_pattern(self.geometry, self.d_min, self.d_max, seed=self.sample_seed(index))

    def __iter__(self):
        return (self[i] for i in range(self.count))


def periodic_lattice(geometry: TorusGeometry) -> DelonePattern:
    """Integer lattice ``{0, ..., L-1}^d`` in lexicographic order."""
    L = geometry.L
    if L != int(L):
        raise InvalidParameter(f"periodic lattice needs integer L, got {L}")
    L = int(L)
    pts = np.indices((L,) * geometry.d).reshape(geometry.d, -1).T.astype(float)
    return DelonePattern(geometry, pts, d_min=1.0, kind="periodic")


def chain_pattern(length: float, d_min: float, seed: int = 0, **kw) -> DelonePattern:
    """One-dimensional amorphous pattern, convenience wrapper."""
    return generate_pattern(TorusGeometry(length, 1), d_min, seed=seed, **kw)


# ----------------------------------------------------------------------------
# verification and translation

@dataclass(frozen=True, eq=False)
class DeloneReport:
    uniform_discrete: bool
    relatively_dense: bool
    min_distance: float
    hole_estimate: float
    pair_witnesses: np.ndarray
    hole_witnesses: np.ndarray

    @property
    def is_delone(self) -> bool:
        return self.uniform_discrete and self.relatively_dense

    def as_dict(self) -> dict:
        return {
            "uniform_discrete": self.uniform_discrete,
            "relatively_dense": self.relatively_dense,
            "min_distance": self.min_distance,
            "hole_estimate": self.hole_estimate,
            "pair_witnesses": self.pair_witnesses.tolist(),
            "hole_witnesses": self.hole_witnesses.tolist(),
        }


def verify_delone(pattern: DelonePattern, r: float, R: float, max_witnesses: int = 10) -> DeloneReport:
    """Check the (r, R)-Delone conditions on the torus.

    An open ball of radius ``r`` holds two points iff they are closer than
    ``2 r``, so uniform discreteness is exact.  Relative density is checked on
    a grid of ball centres with step ``<= R/8``: the pattern passes when the
    grid estimate of the largest empty ball plus the half-diagonal of a grid
    cell stays below ``R`` (a sufficient condition).
    """
    if not (r > 0 and R > 0):
        raise InvalidParameter("r and R must be positive")
    if r >= R:
        raise InvalidParameter(f"need r < R, got r={r}, R={R}")
    L, d = pattern.L, pattern.d
    pairs = np.empty((0, 2), dtype=np.int64)
    dmin = min_pair_distance(pattern)
    if pattern.n >= 2 and dmin < 2 * r:
        tree = cKDTree(pattern.points, boxsize=L)
        cand = tree.query_pairs(2 * r, output_type="ndarray")
        if cand.size:
            dist = torus_distance(pattern.points[cand[:, 0]], pattern.points[cand[:, 1]], L)
            pairs = cand[dist < 2 * r][:max_witnesses]
    step = R / 8.0
    m = max(1, int(np.ceil(L / step)))
    half_diag = 0.5 * (L / m) * np.sqrt(d)
    hole, where = largest_hole_estimate(pattern.points, L, step)
    dense = hole + half_diag < R
    holes = np.empty((0, d))
    if not dense:
        holes = np.atleast_2d(where)
    return DeloneReport(
        uniform_discrete=bool(pairs.shape[0] == 0 and not dmin < 2 * r),
        relatively_dense=bool(dense),
        min_distance=dmin,
        hole_estimate=hole,
        pair_witnesses=pairs,
        hole_witnesses=holes,
    )


def _wrap(x, L):
    out = np.mod(x, L)
    out[out >= L] = 0.0
    return out


def translate_pattern(pattern: DelonePattern, a) -> DelonePattern:
    """Shift every point by ``-a`` and wrap into ``[0, L)^d``; order is kept."""
    a = np.broadcast_to(np.asarray(a, dtype=float), (pattern.d,))
    pts = _wrap(pattern.points - a, pattern.L)
    return DelonePattern(pattern.geometry, pts, d_min=pattern.d_min, d_max=pattern.d_max,
                         seed=pattern.seed, kind=pattern.kind, attempts=pattern.attempts)


# ----------------------------------------------------------------------------
# plain-text serialization

def _fmt(v) -> str:
    return repr(float(v)) if v is not None else "none"


def dumps_pattern(pattern: DelonePattern) -> str:
    buf = io.StringIO()
    seed = -1 if pattern.seed is None else pattern.seed
    buf.write(f"# L={_fmt(pattern.L)} d={pattern.d} d_min={_fmt(pattern.d_min)} "
              f"seed={seed} kind={pattern.kind}\n")
    if pattern.d_max is not None:
        buf.write(f"# d_max={_fmt(pattern.d_max)}\n")
    for row in pattern.points:
        buf.write(" ".join(f"{v:.17g}" for v in row) + "\n")
    return buf.getvalue()


def loads_pattern(text: str) -> DelonePattern:
    meta = {}
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, val = tok.partition("=")
                meta[key] = val
            continue
        rows.append([float(v) for v in line.split()])
    try:
        geom = TorusGeometry(float(meta["L"]), int(meta["d"]))
        seed = int(meta["seed"])
        d_max = meta.get("d_max")
        return DelonePattern(
            geom, np.array(rows, dtype=float).reshape(-1, geom.d),
            d_min=float(meta["d_min"]),
            d_max=None if d_max in (None, "none") else float(d_max),
            seed=None if seed < 0 else seed,
            kind=meta["kind"],
        )
    except KeyError as exc:
        raise InvalidParameter(f"pattern header is missing {exc}") from None


def save_pattern(pattern: DelonePattern, path) -> None:
    with open(os.fspath(path), "w") as fh:
        fh.write(dumps_pattern(pattern))


def load_pattern(path) -> DelonePattern:
    with open(os.fspath(path)) as fh:
        return loads_pattern(fh.read())
