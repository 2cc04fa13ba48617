"""Besicovitch-type covers of the support of a grid density.

Cubes are centered at support cell centers with side l(x); balls have
radius eps*R(y).  A cell is covered when its center lies in the closed
cube or ball.  Selection is greedy, largest first, which gives every cell
at most 2^d cubes: two cubes containing x whose centers sit in the same
closed orthant around x would have the later center inside the earlier
(larger) cube.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import local_cube_lengths, local_radii, mass
from .errors import CoverInvariantViolated, EpsilonOutOfRange, MassTooSmall


def family_bound(d):
    """3^d (4^d + 1), the number of subfamilies the lemma allows."""
    return 3 ** d * (4 ** d + 1)


def box_distance(c1, l1, c2, l2):
    """Euclidean distance between two closed axis-aligned cubes."""
    gap = np.maximum(np.abs(np.asarray(c1) - np.asarray(c2)) - (l1 + l2) / 2, 0.0)
    return float(np.sqrt(np.sum(gap * gap)))


@dataclass
class CubeCover:
    centers: np.ndarray      # (J, d)
    sides: np.ndarray        # (J,)
    families: np.ndarray     # (J,) family index per cube
    cells: np.ndarray        # (J,) flat index of the cell at each center
    membership: np.ndarray   # (J, ncells) bool, cell center inside cube
    support: np.ndarray      # flat support indices of the covered density

    @property
    def family_count(self):
        return int(self.families.max()) + 1 if self.families.size else 0

    @property
    def multiplicity(self):
        """eta per cell: how many cubes contain the cell center."""
        return self.membership.sum(axis=0)

    def to_json(self):
        return {"kind": "cubes", "familyCount": self.family_count,
                "cubes": [{"center": c.tolist(), "side": float(l), "family": int(k)}
                          for c, l, k in zip(self.centers, self.sides, self.families)],
                "maxMultiplicity": int(self.multiplicity[self.support].max())}


@dataclass
class BallCover:
    centers: np.ndarray
    radii: np.ndarray
    cells: np.ndarray
    epsilon: float
    membership: np.ndarray
    support: np.ndarray
    local_radius: np.ndarray  # R at every cell center

    @property
    def multiplicity(self):
        return self.membership.sum(axis=0)

    @property
    def multiplicity_bound(self):
        """C_d as recorded for this cover: the measured maximum multiplicity."""
        return int(self.multiplicity[self.support].max())

    def to_json(self):
        return {"kind": "balls", "epsilon": self.epsilon,
                "balls": [{"center": c.tolist(), "radius": float(r)}
                          for c, r in zip(self.centers, self.radii)],
                "multiplicityBound": self.multiplicity_bound}


def _inside_cube(centers, c, side):
    return np.all(np.abs(centers - c) <= side / 2 * (1 + 1e-12), axis=1)


def _inside_ball(centers, c, r):
    return np.sqrt(np.sum((centers - c) ** 2, axis=1)) <= r * (1 + 1e-12)


def _greedy(sizes, support, pts, inside):
    """Largest-first greedy cover; ties go to the smallest flat index."""
    order = support[np.lexsort((support, -sizes[support]))]
    covered = np.zeros(pts.shape[0], dtype=bool)
    chosen, members = [], []
    for c in order:
        if covered[c]:
            continue
        m = inside(pts, pts[c], sizes[c])
        covered |= m
        chosen.append(c)
        members.append(m)
    return np.array(chosen, dtype=int), np.array(members)


def besicovitch_cubes(rho):
    """Greedy cube cover with l(x) sides, split into well-separated families."""
    if mass(rho) <= 1:
        raise MassTooSmall(f"mass {mass(rho):.6g} <= 1")
    pts = rho.centers()
    support = rho.support
    sides = np.full(rho.ncells, np.nan)
    sides[support] = local_cube_lengths(rho, pts[support])
    chosen, members = _greedy(sides, support, pts, _inside_cube)
    cs, ls = pts[chosen], sides[chosen]
    # greedy coloring of the "too close" graph, larger cubes first
    fam = np.full(len(chosen), -1)
    for i in np.argsort(-ls, kind="stable"):
        used = set()
        for j in np.flatnonzero(fam >= 0):
            if box_distance(cs[i], ls[i], cs[j], ls[j]) < 0.5 * min(ls[i], ls[j]):
                used.add(int(fam[j]))
        k = 0
        while k in used:
            k += 1
        fam[i] = k
    cover = CubeCover(cs, ls, fam, chosen, members, support)
    validate_cube_cover(cover, rho)
    return cover


def validate_cube_cover(cover, rho, slack=0.0):
    """Raise CoverInvariantViolated unless every cover invariant holds."""
    d = rho.dim
    if cover.family_count > family_bound(d):
        raise CoverInvariantViolated(f"{cover.family_count} families > {family_bound(d)}")
    eta = cover.multiplicity[cover.support]
    if np.any(eta < 1):
        raise CoverInvariantViolated("support cell not covered")
    if np.any(eta > 2 ** d):
        raise CoverInvariantViolated(f"multiplicity {eta.max()} > {2 ** d}")
    for k in range(cover.family_count):
        idx = np.flatnonzero(cover.families == k)
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                i, j = idx[a], idx[b]
                dist = box_distance(cover.centers[i], cover.sides[i],
                                    cover.centers[j], cover.sides[j])
                if dist < 0.5 * min(cover.sides[i], cover.sides[j]) - slack:
                    raise CoverInvariantViolated(f"family {k}: cubes {i},{j} too close")
    return True


def partition_of_unity(cover, rho=None):
    """chi[j, c] = 1_{Q_j}(c) / eta(c); rows sum to one on the support."""
    eta = cover.multiplicity.astype(float)
    chi = np.where(cover.membership, 1.0, 0.0)
    pos = eta > 0
    chi[:, pos] /= eta[pos]
    return chi


def besicovitch_balls(rho, epsilon):
    """Greedy cover by balls B(y, eps R(y)), largest R first."""
    if not (0 < epsilon < 1 / 9):
        raise EpsilonOutOfRange(f"epsilon={epsilon} not in (0, 1/9)")
    if mass(rho) <= 1:
        raise MassTooSmall(f"mass {mass(rho):.6g} <= 1")
    pts = rho.centers()
    support = rho.support
    R = np.full(rho.ncells, np.nan)
    R[support] = local_radii(rho, pts[support])
    radii = epsilon * R
    chosen, members = _greedy(radii, support, pts, _inside_ball)
    cover = BallCover(pts[chosen], radii[chosen], chosen, float(epsilon), members,
                      support, R)
    validate_ball_cover(cover)
    return cover


def validate_ball_cover(cover):
    eta = cover.multiplicity[cover.support]
    if np.any(eta < 1):
        raise CoverInvariantViolated("support cell not covered")
    y, r = cover.centers, cover.radii
    for j in range(len(r)):
        dist = np.sqrt(np.sum((y[j + 1:] - y[j]) ** 2, axis=1))
        need = np.maximum(r[j + 1:], r[j])
        if np.any(dist < need * (1 - 1e-12)):
            raise CoverInvariantViolated(f"ball {j} violates the distance bound")
    return True


def ball_partition(cover):
    """chi[j, c] = 1_{B_j}(c) / (number of balls containing c)."""
    eta = cover.multiplicity.astype(float)
    chi = np.where(cover.membership, 1.0, 0.0)
    pos = eta > 0
    chi[:, pos] /= eta[pos]
    return chi
