"""Grid densities and the local geometric quantities built from them.

A :class:`GridDensity` is a nonnegative function that is constant on the
cells of a rectangular grid.  Everything else in the package (states,
covers, bounds, oracles) is expressed in terms of cell masses
``m_c = rho_c * v`` with ``v`` the common cell volume.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from math import gamma, pi

import numpy as np

from .errors import MassTooSmall, OutOfRange

# relative bisection tolerance on R and l
BISECT_RTOL = 1e-10
# radii scanned by the maximal function
MAXIMAL_RADII = 64
# points processed per vectorized block when solving for R or l
_CHUNK = 256


def unit_ball_volume(d):
    """|B_1| in dimension d."""
    return pi ** (d / 2) / gamma(d / 2 + 1)


def unit_sphere_area(d):
    """|S^{d-1}|, e.g. 2 for d=1, 2*pi for d=2, 4*pi for d=3."""
    return 2 * pi ** (d / 2) / gamma(d / 2)


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Piecewise-constant density on a d-dimensional rectangular grid.

    ``values`` has shape ``shape``; cell ``i`` (multi-index) covers
    ``origin + i*spacing`` to ``origin + (i+1)*spacing``.
    """

    values: np.ndarray
    spacing: tuple
    origin: tuple

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 0:
            vals = vals.reshape(1)
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("density values must be finite and nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        sp = tuple(float(s) for s in np.broadcast_to(self.spacing, (vals.ndim,)))
        org = tuple(float(o) for o in np.broadcast_to(self.origin, (vals.ndim,)))
        if any(s <= 0 for s in sp):
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "spacing", sp)
        object.__setattr__(self, "origin", org)

    # -- construction -------------------------------------------------
    @classmethod
    def uniform(cls, value, lo, hi, cells):
        """Constant ``value`` on the box [lo, hi] split into ``cells`` cells per axis."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        cells = tuple(np.broadcast_to(cells, lo.shape).astype(int))
        return cls(np.full(cells, float(value)), tuple((hi - lo) / cells), tuple(lo))

    @classmethod
    def from_function(cls, f, lo, hi, cells):
        """Sample ``f`` (vectorized over an (n, d) array of points) at cell centers."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        cells = tuple(np.broadcast_to(cells, lo.shape).astype(int))
        g = cls(np.zeros(cells), tuple((hi - lo) / cells), tuple(lo))
        vals = np.asarray(f(g.centers()), dtype=float).reshape(cells)
        return g.with_values(np.clip(vals, 0.0, None))

    def with_values(self, values):
        return GridDensity(np.asarray(values, dtype=float).reshape(self.shape),
                           self.spacing, self.origin)

    def with_masses(self, masses):
        """Same grid, values chosen so that the cell masses equal ``masses``."""
        return self.with_values(np.asarray(masses, dtype=float) / self.cell_volume)

    def scaled(self, factor):
        return self.with_values(self.values * factor)

    # -- geometry -----------------------------------------------------
    @property
    def dim(self):
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    @property
    def ncells(self):
        return self.values.size

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def diagonal(self):
        """Length of one cell diagonal."""
        return float(np.sqrt(np.sum(np.square(self.spacing))))

    @property
    def lower(self):
        return np.array(self.origin)

    @property
    def upper(self):
        return np.array(self.origin) + np.array(self.spacing) * np.array(self.shape)

    def centers(self):
        """Cell centers as an (ncells, d) array in row-major order."""
        axes = [self.origin[k] + (np.arange(n) + 0.5) * self.spacing[k]
                for k, n in enumerate(self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def edges(self, axis=0):
        n = self.shape[axis]
        return self.origin[axis] + np.arange(n + 1) * self.spacing[axis]

    @property
    def flat(self):
        return self.values.ravel()

    @property
    def masses(self):
        """Cell masses m_c = rho_c * v, row-major."""
        return self.flat * self.cell_volume

    @property
    def support(self):
        """Flat indices of cells with positive value."""
        return np.flatnonzero(self.flat > 0)

    def cell_index(self, x):
        """Flat index of the cell containing point x (clipped to the grid)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.floor((x - self.lower) / np.array(self.spacing)).astype(int)
        idx = np.clip(idx, 0, np.array(self.shape) - 1)
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def distance_matrix(self, cells=None):
        """Pairwise center distances between the given flat cells (default all)."""
        c = self.centers() if cells is None else self.centers()[np.asarray(cells)]
        diff = c[:, None, :] - c[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))

    # -- serialization ------------------------------------------------
    def to_json(self):
        return {"dim": self.dim, "shape": list(self.shape), "spacing": list(self.spacing),
                "origin": list(self.origin), "values": [float(v) for v in self.flat]}

    @classmethod
    def from_json(cls, obj):
        shape = tuple(int(s) for s in obj["shape"])
        if len(shape) != int(obj.get("dim", len(shape))):
            raise ValueError("dim does not match shape")
        vals = np.asarray(obj["values"], dtype=float)
        if vals.size != int(np.prod(shape)):
            raise ValueError("values length does not match shape")
        return cls(vals.reshape(shape), tuple(obj["spacing"]), tuple(obj["origin"]))

    def content_hash(self):
        import hashlib
        h = hashlib.sha256()
        h.update(json.dumps([self.shape, self.spacing, self.origin]).encode())
        h.update(np.ascontiguousarray(self.flat).tobytes())
        return h.hexdigest()[:16]


def load_density(path):
    """Read a density from JSON, or from a two-column (x, rho) CSV in 1D."""
    path = str(path)
    if path.lower().endswith(".csv"):
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    continue  # header line
        xs = np.array([r[0] for r in rows])
        vals = np.array([r[1] for r in rows])
        if xs.size < 2:
            raise ValueError("CSV density needs at least two rows")
        h = np.diff(xs)
        if np.any(np.abs(h - h[0]) > 1e-9 * max(1.0, abs(h[0]))) or h[0] <= 0:
            raise ValueError("CSV x column must be uniformly spaced and increasing")
        return GridDensity(vals, (h[0],), (xs[0] - h[0] / 2,))
    with open(path) as fh:
        return GridDensity.from_json(json.load(fh))


# -- integrals -----------------------------------------------------------

def mass(rho):
    """N = sum of value * cell volume."""
    return float(np.sum(rho.values) * rho.cell_volume)


def integral_power(rho, p, log_scale=None):
    """Integral of rho^p, or of rho^p (log(log_scale * rho))_+ when ``log_scale`` is set."""
    v = rho.flat
    pos = v > 0
    if log_scale is None:
        return float(np.sum(v[pos] ** p) * rho.cell_volume)
    logs = np.maximum(np.log(log_scale * v[pos]), 0.0)
    return float(np.sum(v[pos] ** p * logs) * rho.cell_volume)


def entropy_integral(rho):
    """Integral of rho log rho with 0 log 0 = 0."""
    v = rho.flat
    pos = v > 0
    return float(np.sum(v[pos] * np.log(v[pos])) * rho.cell_volume)


# -- ball and cube masses --------------------------------------------------

def _subcell_offsets(rho):
    d = rho.dim
    k = np.array(np.meshgrid(*[np.arange(3)] * d, indexing="ij")).reshape(d, -1).T
    return (k - 1) * (np.array(rho.spacing) / 3.0)


def ball_masses(rho, points, radii):
    """Mass of rho in B(x, R) for arrays of points (P, d) and radii (P,).

    In 1D the overlap of the ball with each cell is exact.  In higher
    dimensions cells fully inside or outside count as 1 or 0, and each
    boundary cell is split into 3^d subcells whose coverage is a linear
    ramp of width one subcell side around the sphere; the result is
    continuous and nondecreasing in R.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (points.shape[0],))
    m = rho.masses
    sel = m > 0
    c = rho.centers()[sel]
    m = m[sel]
    h = np.array(rho.spacing)
    out = np.empty(points.shape[0])
    for s in range(0, points.shape[0], _CHUNK):
        x = points[s:s + _CHUNK]
        R = radii[s:s + _CHUNK, None]
        if rho.dim == 1:
            a = c[None, :, 0] - h[0] / 2
            b = c[None, :, 0] + h[0] / 2
            lo = np.maximum(x[:, :1] - R, a)
            hi = np.minimum(x[:, :1] + R, b)
            frac = np.clip(hi - lo, 0.0, h[0]) / h[0]
        else:
            gap = np.abs(x[:, None, :] - c[None, :, :])
            dmin = np.sqrt(np.sum(np.maximum(gap - h / 2, 0.0) ** 2, axis=-1))
            dmax = np.sqrt(np.sum((gap + h / 2) ** 2, axis=-1))
            frac = (dmax <= R).astype(float)
            bnd = (dmin < R) & (dmax > R)
            if np.any(bnd):
                pi_, ci_ = np.nonzero(bnd)
                sub = c[ci_][:, None, :] + _subcell_offsets(rho)[None, :, :]
                dist = np.sqrt(np.sum((sub - x[pi_][:, None, :]) ** 2, axis=-1))
                side = float(np.min(h)) / 3.0
                ramp = np.clip((R[pi_] - dist) / side + 0.5, 0.0, 1.0)
                frac[pi_, ci_] = ramp.mean(axis=1)
        out[s:s + _CHUNK] = frac @ m
    return out


def ball_mass(rho, x, R):
    return float(ball_masses(rho, np.atleast_2d(x), np.array([R]))[0])


def cube_masses(rho, points, sides):
    """Mass of rho in the cube of side l centered at x (exact overlap)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    sides = np.broadcast_to(np.asarray(sides, dtype=float), (points.shape[0],))
    m = rho.masses
    sel = m > 0
    c = rho.centers()[sel]
    m = m[sel]
    h = np.array(rho.spacing)
    out = np.empty(points.shape[0])
    for s in range(0, points.shape[0], _CHUNK):
        x = points[s:s + _CHUNK, None, :]
        half = sides[s:s + _CHUNK, None, None] / 2
        lo = np.maximum(x - half, c[None] - h / 2)
        hi = np.minimum(x + half, c[None] + h / 2)
        frac = np.prod(np.clip(hi - lo, 0.0, None) / h, axis=-1)
        out[s:s + _CHUNK] = frac @ m
    return out


def cube_overlap(rho, center, side):
    """Fraction of each cell (flat, row-major) covered by a centered cube."""
    c = rho.centers()
    h = np.array(rho.spacing)
    lo = np.maximum(np.asarray(center) - side / 2, c - h / 2)
    hi = np.minimum(np.asarray(center) + side / 2, c + h / 2)
    return np.prod(np.clip(hi - lo, 0.0, None) / h, axis=-1)


def _largest_root(fn, points, target, hi0):
    """Largest r with fn(points, r) <= target, by bisection (upper bracket end)."""
    lo = np.zeros(points.shape[0])
    hi = np.full(points.shape[0], hi0)
    # make sure the upper end exceeds the target
    for _ in range(60):
        bad = fn(points, hi) <= target
        if not np.any(bad):
            break
        hi = np.where(bad, 2 * hi, hi)
    for _ in range(200):
        if np.all(hi - lo <= BISECT_RTOL * hi):
            break
        mid = 0.5 * (lo + hi)
        below = fn(points, mid) <= target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return hi


def _box_reach(rho, points):
    far = np.maximum(np.abs(points - rho.lower), np.abs(points - rho.upper))
    return np.sqrt(np.sum(far ** 2, axis=1)) + rho.diagonal


def local_radii(rho, points=None):
    """R(x) at each point (default: every cell center)."""
    if mass(rho) <= 1:
        raise MassTooSmall(f"mass {mass(rho):.6g} <= 1, R(x) undefined")
    pts = rho.centers() if points is None else np.atleast_2d(np.asarray(points, float))
    return _largest_root(lambda p, r: ball_masses(rho, p, r), pts, 1.0,
                         _box_reach(rho, pts))


def local_radius(rho, x):
    """Largest R with mass 1 in the ball B(x, R)."""
    return float(local_radii(rho, np.atleast_2d(x))[0])


def cube_threshold(d):
    """Cube mass 1/(3^d (4^d + 1)) that defines l(x)."""
    return 1.0 / (3 ** d * (4 ** d + 1))


def local_cube_lengths(rho, points=None):
    """l(x) at each point (default: every cell center)."""
    thr = cube_threshold(rho.dim)
    if mass(rho) <= thr:
        raise MassTooSmall(f"mass {mass(rho):.6g} <= {thr:.6g}, l(x) undefined")
    pts = rho.centers() if points is None else np.atleast_2d(np.asarray(points, float))
    return _largest_root(lambda p, r: cube_masses(rho, p, r), pts, thr,
                         2 * _box_reach(rho, pts))


def local_cube_length(rho, x):
    """Largest l with mass 1/(3^d(4^d+1)) in the cube of side l centered at x."""
    return float(local_cube_lengths(rho, np.atleast_2d(x))[0])


def maximal_functions(rho, points=None, extra_radii=None):
    """Lower approximation of the Hardy-Littlewood maximal function.

    Ball averages are scanned over 64 geometric radii between the smallest
    spacing and the grid diameter, plus optional per-point radii, and the
    value of the cell containing x (the r -> 0 limit) is included.
    """
    pts = rho.centers() if points is None else np.atleast_2d(np.asarray(points, float))
    d = rho.dim
    diam = float(np.linalg.norm(rho.upper - rho.lower))
    radii = np.geomspace(min(rho.spacing), max(diam, min(rho.spacing)), MAXIMAL_RADII)
    best = np.array([rho.flat[rho.cell_index(x)] for x in pts])
    bvol = unit_ball_volume(d)
    cols = [np.broadcast_to(r, (pts.shape[0],)) for r in radii]
    if extra_radii is not None:
        cols.append(np.asarray(extra_radii, dtype=float))
    for r in cols:
        avg = ball_masses(rho, pts, r) / (bvol * r ** d)
        best = np.maximum(best, avg)
    return best


def maximal_function(rho, x):
    """M_rho(x); also probes r = R(x) when the mass exceeds one."""
    extra = None
    if mass(rho) > 1:
        extra = np.array([local_radius(rho, x)])
    return float(maximal_functions(rho, np.atleast_2d(x), extra)[0])


@dataclass(frozen=True)
class LocalGeometry:
    """R, l and M evaluated at every cell center, plus R_rho over the support."""

    radius: np.ndarray
    cubeLength: np.ndarray
    maximal: np.ndarray
    minRadius: float


def local_geometry(rho):
    m = mass(rho)
    radius = local_radii(rho) if m > 1 else np.full(rho.ncells, np.inf)
    cube = (local_cube_lengths(rho) if m > cube_threshold(rho.dim)
            else np.full(rho.ncells, np.inf))
    maxf = maximal_functions(rho, extra_radii=radius if m > 1 else None)
    sup = rho.support
    rmin = float(np.min(radius[sup])) if sup.size else np.inf
    return LocalGeometry(radius, cube, maxf, rmin)


def min_radius(rho):
    """R_rho = min of R over the support (inf if the mass is at most one)."""
    if mass(rho) <= 1:
        return np.inf
    sup = rho.support
    return float(np.min(local_radii(rho, rho.centers()[sup])))


# -- 1D helpers -----------------------------------------------------------

def cumulative_1d(rho):
    """Cumulative mass at the cell edges, length n+1."""
    if rho.dim != 1:
        raise ValueError("1D density required")
    return np.concatenate([[0.0], np.cumsum(rho.masses)])


def cumulative_at(rho, x):
    """Cumulative mass up to x (vectorized), exact for piecewise-constant rho."""
    x = np.asarray(x, dtype=float)
    e = rho.edges()
    cum = cumulative_1d(rho)
    return np.interp(x, e, cum)


def quantile_1d(rho, t):
    """Largest x with cumulative mass t, for 0 < t < mass."""
    if rho.dim != 1:
        raise ValueError("quantile_1d needs a 1D density")
    total = mass(rho)
    if not (0 < t < total):
        raise OutOfRange(f"t={t} outside (0, {total})")
    cum = cumulative_1d(rho)
    tol = 1e-12 * max(1.0, total)
    i = int(np.argmax(cum[1:] > t + tol))
    m = rho.masses[i]
    frac = min(max((t - cum[i]) / m, 0.0), 1.0)
    return float(rho.edges()[i] + frac * rho.spacing[0])


def window_masses_1d(rho, length):
    """Maximum over x of the mass in [x, x+length), exact for piecewise-constant rho."""
    e = rho.edges()
    cand = np.concatenate([e, e - length])
    w = cumulative_at(rho, cand + length) - cumulative_at(rho, cand)
    return float(np.max(w))
