"""Trial states behind the upper bounds.

Each builder returns a state from :mod:`freebound.states` whose one-body
density is the target grid density, so its free energy can be compared
both with the exact oracle value and with the closed-form bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, combinations_with_replacement
from math import ceil, floor, sqrt

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .covering import ball_partition, besicovitch_balls, partition_of_unity
from .density import cumulative_1d, local_radii, mass, quantile_1d
from .errors import (CubeMassExceedsOne, DensityExceedsPacking, Infeasible,
                     NonIntegerMass, TooLarge)
from .states import (Mixture, PairTable, SiteMixture, SparseJoint, block_approximation,
                     config_energy)

MASS_TOL = 1e-9


def integer_mass(rho):
    m = mass(rho)
    N = int(round(m))
    if N < 1 or abs(m - N) > MASS_TOL * max(1.0, m):
        raise NonIntegerMass(f"mass {m:.12g} is not a positive integer")
    return N


# -- one dimension ----------------------------------------------------------

@dataclass(frozen=True)
class IntervalSplit:
    """2N consecutive intervals of mass 1/2; ``odd`` holds L_j, ``even`` L*_j."""

    breakpoints: np.ndarray  # 2N+1 points, first and last are the grid ends
    odd: list
    even: list

    @property
    def lengths(self):
        return [b - a for a, b in self.odd], [b - a for a, b in self.even]


def split_1d(rho):
    N = integer_mass(rho)
    lo, hi = float(rho.lower[0]), float(rho.upper[0])
    inner = [quantile_1d(rho, k / 2) for k in range(1, 2 * N)]
    bp = np.array([lo] + inner + [hi])
    ivs = [(bp[k], bp[k + 1]) for k in range(2 * N)]
    return IntervalSplit(bp, ivs[0::2], ivs[1::2])


def _interval_weights(rho, a, b):
    """Cell probabilities 2 * rho_c * |c cap [a, b]|."""
    e = rho.edges()
    overlap = np.clip(np.minimum(e[1:], b) - np.maximum(e[:-1], a), 0.0, None)
    q = 2 * rho.flat * overlap
    return q / q.sum()


def trial_1d(rho, split=None):
    """P = (Q + Q*)/2 with Q the symmetrized product of 2 rho 1_{L_j}."""
    split = split or split_1d(rho)
    Q = np.array([_interval_weights(rho, a, b) for a, b in split.odd])
    Qs = np.array([_interval_weights(rho, a, b) for a, b in split.even])
    return Mixture(rho, [0.5, 0.5], [Q, Qs])


def monge_state_1d(rho, t_samples=256):
    """Particles at x(t), x(t+1), ..., x(t+N-1) with t uniform in (0, 1).

    ``t_samples=None`` integrates over t exactly using the breakpoints at
    which some x(t+i) changes cell; the density is then reproduced exactly.
    """
    N = integer_mass(rho)
    cum = cumulative_1d(rho)
    cum_n = cum * (N / cum[-1])  # remove rounding in the total

    def cells_at(t):
        out = []
        for i in range(N):
            s = t + i
            c = int(np.argmax(cum_n[1:] > s))
            out.append(c)
        return out

    if t_samples is not None:
        ts = (np.arange(t_samples) + 0.5) / t_samples
        tuples = [cells_at(t) for t in ts]
        return SparseJoint.from_ordered(rho, tuples, np.full(t_samples, 1.0 / t_samples))
    brk = {0.0, 1.0}
    for i in range(N):
        for c in cum_n:
            if 0 < c - i < 1:
                brk.add(float(c - i))
    brk = np.array(sorted(brk))
    lens = np.diff(brk)
    keep = lens > 0
    mids = 0.5 * (brk[:-1] + brk[1:])[keep]
    tuples = [cells_at(t) for t in mids]
    return SparseJoint.from_ordered(rho, tuples, lens[keep] / lens[keep].sum())


# -- grand-canonical cube construction ---------------------------------------

def gc_besicovitch_trial(rho, cover=None):
    """(1/K) sum_k product over cubes of family k of (vacuum + K rho 1_Q / eta)."""
    m = rho.masses
    if cover is None:
        if m.sum() > 1 + 1e-12:
            raise ValueError("a cube cover is required when the mass exceeds one")
        return SiteMixture(rho, [1.0], [m[None, :]])
    K = cover.family_count
    chi = partition_of_unity(cover, rho)
    sites = K * chi * m[None, :]
    a = sites.sum(axis=1)
    if np.any(a > 1 + 1e-12):
        j = int(np.argmax(a))
        raise CubeMassExceedsOne(f"cube {j} carries mass {a[j]:.6g} > 1")
    sites = np.where(a[:, None] > 1, sites / a[:, None], sites)
    fams = [sites[cover.families == k] for k in range(K)]
    out = SiteMixture(rho, np.full(K, 1.0 / K), fams)
    out.meta.update(K=K, cubes=int(len(cover.sides)))
    return out


# -- optimal transport states -------------------------------------------------

def _admissible(rho, N, rule, delta):
    sup = rho.support
    pts = rho.centers()
    if rule == "fixed":
        need = lambda i, j: delta
    elif rule == "R":
        R = np.full(rho.ncells, np.inf)
        R[sup] = local_radii(rho, pts[sup])
        Rmin = float(R[sup].min())
        need = lambda i, j: max(Rmin, (R[i] + R[j]) / 3)
    else:
        raise ValueError(f"unknown separation rule {rule!r}")
    ok = np.zeros((rho.ncells, rho.ncells), dtype=bool)
    for a, i in enumerate(sup):
        for j in sup[a + 1:]:
            ok[i, j] = ok[j, i] = np.linalg.norm(pts[i] - pts[j]) >= need(i, j) * (1 - 1e-12)
    combos = [c for c in combinations(sup, N)
              if all(ok[i, j] for i, j in combinations(c, 2))]
    return combos


def ot_state_small(rho, w=None, rule="R", delta=None):
    """Symmetric N-body state with marginal rho supported on the admissible set.

    rule "fixed" requires center distance >= delta between all particles;
    rule "R" requires |x_i - x_j| >= max(R_rho, (R(x_i) + R(x_j))/3).
    Among feasible couplings the interaction energy is minimized.
    """
    N = integer_mass(rho)
    if N > 3:
        raise TooLarge("ot_state_small handles N <= 3")
    if N == 1:
        sup = rho.support
        return SparseJoint(rho, sup[:, None], rho.masses[sup] / rho.masses[sup].sum())
    if rule == "fixed" and delta is None:
        raise ValueError("fixed rule needs delta")
    combos = _admissible(rho, N, rule, delta)
    if not combos:
        raise Infeasible(f"no admissible configuration at spacing {rho.spacing}")
    combos = np.array(combos, dtype=int)
    if combos.shape[0] > 10 ** 6:
        raise TooLarge("admissible set too large")
    sup = rho.support
    row_of = {int(c): r for r, c in enumerate(sup)}
    rows = np.array([row_of[int(c)] for c in combos.ravel()])
    cols = np.repeat(np.arange(combos.shape[0]), N)
    A = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(sup.size, combos.shape[0])).tocsr()
    b = rho.masses[sup]
    if w is not None:
        table = PairTable(rho, w)
        cost = np.array([config_energy(table, c) for c in combos])
        finite = np.isfinite(cost)
        combos, cost, A = combos[finite], cost[finite], A[:, finite]
    else:
        cost = np.zeros(combos.shape[0])
    res = linprog(cost, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise Infeasible(f"no coupling on the admissible set at spacing {rho.spacing}: "
                         f"{res.message}")
    x = np.clip(res.x, 0.0, None)
    keep = x > 1e-15
    return SparseJoint(rho, combos[keep], x[keep] / x[keep].sum())


def block_ot_trial(rho, w=None, epsilon=0.05):
    """Block approximation of the R-rule transport state over an eps-ball cover."""
    P = ot_state_small(rho, w, rule="R")
    cover = besicovitch_balls(rho, epsilon)
    chi = ball_partition(cover)
    out = block_approximation(P, chi, rho)
    out.cover = cover
    out.block_masses = chi @ rho.masses
    return out


def separation_target(epsilon):
    """1/3 (1 - 8 eps / (1 - eps)), the gap factor that survives the blocks."""
    return (1 - 8 * epsilon / (1 - epsilon)) / 3


# -- floating crystal ---------------------------------------------------------

def _crystal_1d(rho, r0, epsilon):
    h = rho.spacing[0]
    a = r0 / (1 - epsilon)
    p = int(floor(a / h + 1e-9))
    k = int(ceil(r0 / h - 1e-9))
    q = p + 1 - k
    if q % 2 == 0:
        q -= 1
    if q < 1:
        raise DensityExceedsPacking(f"grid spacing {h} too coarse for r0={r0}, eps={epsilon}")
    offsets = [np.array([o]) for o in range(-(q // 2), q // 2 + 1)]
    return [np.array([p])], offsets, 1.0 / (p * h), (p,)


def _crystal_2d(rho, r0, epsilon):
    hx, hy = rho.spacing
    a = r0 / (1 - epsilon)
    def lattice(px):
        py = max(2, 2 * int(round(sqrt(3) * px * hx / hy / 2)))
        basis = [np.array([px, 0]), np.array([0, py]), np.array([px // 2, py // 2])]
        # smallest separation between distinct lattice points, in length units
        return basis, min(np.hypot(v[0] * hx, v[1] * hy) for v in basis)

    # largest even period whose spacing stays below r0/(1-eps), but never below r0
    px = max(2, 2 * int(floor(a / hx / 2 + 1e-9)))
    basis, dmin = lattice(px)
    while dmin < r0 - 1e-12:
        px += 2
        basis, dmin = lattice(px)
    py = int(basis[1][1])
    # grow a disk-shaped smear while every cross-site cell distance stays >= r0
    best = None
    for rad in np.arange(0, px + 1):
        offs = [np.array([i, j]) for i in range(-rad, rad + 1) for j in range(-rad, rad + 1)
                if np.hypot(i * hx, j * hy) <= rad * min(hx, hy) + 1e-12]
        ext = max(np.hypot(o[0] * hx, o[1] * hy) for o in offs)
        if dmin - 2 * ext >= r0 - 1e-12:
            best = offs
        else:
            break
    if best is None:
        raise DensityExceedsPacking(f"grid spacing {rho.spacing} too coarse for r0={r0}")
    return basis, best, 2.0 / (px * py * hx * hy), (px, py)


def floating_crystal_localized(rho, w, epsilon, packing=None):
    """Translation-averaged periodic packing, localized by theta = rho / rho_tilde.

    d=1 uses the integer lattice; d=2 uses a centered rectangular lattice with
    aspect ratio close to sqrt(3), the grid-compatible version of the
    triangular packing.  Each lattice point is smeared over a block of cells
    small enough that cells of distinct points stay at center distance >= r0.
    """
    from .bounds import PackingConstants
    packing = packing or PackingConstants()
    d = rho.dim
    r0 = w.r0
    if not (0 < epsilon < 1):
        raise ValueError("epsilon must lie in (0, 1)")
    cap = (1 - epsilon) ** d * r0 ** (-d) * packing.rho_c(d)
    if rho.values.max() > cap * (1 + 1e-12):
        raise DensityExceedsPacking(f"max density {rho.values.max():.6g} > {cap:.6g}")
    if d == 1:
        basis, offsets, rho_t, period = _crystal_1d(rho, r0, epsilon)
        motif = [np.array([0])]
        lattice_step = [np.array(period)]
    elif d == 2:
        basis, offsets, rho_t, period = _crystal_2d(rho, r0, epsilon)
        motif = [np.array([0, 0]), basis[2]]
        lattice_step = [basis[0], basis[1]]
    else:
        raise DensityExceedsPacking("floating crystal is built for d in {1, 2} only")
    if rho.values.max() > rho_t * (1 + 1e-12):
        raise DensityExceedsPacking(
            f"max density {rho.values.max():.6g} exceeds grid crystal density {rho_t:.6g}")
    theta = rho.flat / rho_t
    shape = np.array(rho.shape)
    reach = max(int(np.max(np.abs(offsets))), 0)
    fams = []
    translations = list(np.ndindex(*period))
    for tr in translations:
        tr = np.array(tr)
        sites = []
        ranges = [range(-1 - reach // max(int(s[k]), 1) - 1,
                        int(shape[k] // max(int(lattice_step[k][k]), 1)) + 2)
                  for k, s in enumerate(lattice_step)]
        for idx in np.ndindex(*[len(r) for r in ranges]):
            base = tr + sum(r[i] * s for r, i, s in zip(ranges, idx, lattice_step))
            for mt in motif:
                ctr = base + mt
                cells = [ctr + o for o in offsets]
                cells = [c for c in cells if np.all(c >= 0) and np.all(c < shape)]
                if not cells:
                    continue
                flat = np.ravel_multi_index(np.array(cells).T, rho.shape)
                s = np.zeros(rho.ncells)
                s[flat] = theta[flat] / len(offsets)
                if s.sum() > 0:
                    sites.append(s)
        fams.append(np.array(sites).reshape(-1, rho.ncells))
    out = SiteMixture(rho, np.full(len(fams), 1.0 / len(fams)), fams)
    out.meta.update(period=tuple(int(p) for p in period), smear=len(offsets),
                    crystal_density=rho_t)
    return out
