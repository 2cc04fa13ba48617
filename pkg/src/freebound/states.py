"""Discrete canonical and grand-canonical states on a grid.

Every state is symmetric and piecewise constant on products of cells, so
it is described by the probability of each multiset of occupied cells.
A multiset M of n cells with probability P(M) contributes

    -P(M) log( P(M) * prod_c mult_c(M)! / v^n )

to the entropy -int P log(n! P); this is the exact differential entropy
of the symmetric piecewise-constant density.

Canonical states come in two forms:

* :class:`SparseJoint`: explicit multisets (sorted cell tuples) and probabilities;
* :class:`Mixture`: sum_k w_k Pi_s(q_{k,1} x ... x q_{k,N}) with q cell distributions.

Grand-canonical states are either a vacuum weight plus canonical sectors
(:class:`SectorState`) or a mixture of independent-site products
(:class:`SiteMixture`), where site j holds one particle with cell
distribution s_j / a_j with probability a_j = sum(s_j) and is empty otherwise.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from math import inf, lgamma, log

import numpy as np
from scipy import integrate
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .density import GridDensity
from .errors import SupportOverlap, TooLarge, TruncationTooSevere
from .potential import evaluate

SIZE_CAP = 10 ** 7
PROB_TOL = 1e-12


# -- pair energies ----------------------------------------------------------

def cell_self_energy(w, spacing):
    """Average of w(x - y) over x, y independent and uniform in one cell.

    Infinite whenever the core is not integrable (alpha >= d) or hard.
    """
    d = len(spacing)
    if w.kind != "tabulated" and w.r0 > 0 and w.alpha >= d:
        return inf
    if w.kind == "tabulated" and np.isinf(evaluate(w, 0.0)):
        return inf
    h = np.asarray(spacing, dtype=float)
    pts = [0.0] if w.r0 <= 0 else [min(w.r0, float(h.min()))]
    if d == 1:
        val, _ = integrate.quad(lambda r: evaluate(w, r) * 2 * (1 - r / h[0]) / h[0],
                                0.0, h[0], points=pts, limit=200)
        return float(val)

    def f(*u):
        r = np.sqrt(sum(x * x for x in u))
        wt = np.prod([(1 - x / hk) / hk for x, hk in zip(u, h)])
        return evaluate(w, r) * wt

    val, _ = integrate.nquad(f, [[0.0, hk] for hk in h], opts={"limit": 100})
    return float(2 ** d * val)


class PairTable:
    """w between cell centers, with the cell self-average on the diagonal."""

    def __init__(self, grid, w):
        self.grid = grid
        self.w = w
        self._centers = grid.centers()
        self._self = cell_self_energy(w, grid.spacing)

    def matrix(self, rows, cols=None):
        cols = rows if cols is None else cols
        a = self._centers[np.asarray(rows)]
        b = self._centers[np.asarray(cols)]
        r = np.sqrt(np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1))
        W = evaluate(self.w, r.ravel()).reshape(r.shape)
        same = np.asarray(rows)[:, None] == np.asarray(cols)[None, :]
        W[same] = self._self
        return W

    def pair(self, i, j):
        if i == j:
            return self._self
        return float(evaluate(self.w, float(np.linalg.norm(self._centers[i] - self._centers[j]))))

    def form(self, a, b):
        """a^T W b for nonnegative cell vectors, inf if a forbidden pair has weight."""
        ia = np.flatnonzero(a > 0)
        ib = np.flatnonzero(b > 0)
        if ia.size == 0 or ib.size == 0:
            return 0.0
        W = self.matrix(ia, ib)
        if np.any(np.isinf(W)):
            return inf
        return float(a[ia] @ W @ b[ib])


def config_energy(table, cells):
    """Sum over pairs of a cell multiset."""
    n = len(cells)
    if n < 2:
        return 0.0
    W = table.matrix(np.asarray(cells))
    iu = np.triu_indices(n, 1)
    vals = W[iu]
    if np.any(np.isinf(vals)):
        return inf
    return float(np.sum(vals))


# -- state types ------------------------------------------------------------

@dataclass(eq=False)
class SparseJoint:
    """Symmetric N-body state given by multiset probabilities."""

    grid: GridDensity
    tuples: np.ndarray   # (M, N) sorted cell indices
    probs: np.ndarray    # (M,)

    def __post_init__(self):
        t = np.asarray(self.tuples, dtype=int)
        if t.ndim == 1:
            t = t[:, None]
        self.tuples = np.sort(t, axis=1)
        self.probs = np.asarray(self.probs, dtype=float)
        if np.any(self.probs < -PROB_TOL) or abs(self.probs.sum() - 1) > 1e-9:
            raise ValueError("SparseJoint probabilities must be nonnegative and sum to 1")
        if self.tuples.shape[0] > SIZE_CAP:
            raise TooLarge("SparseJoint exceeds the size cap")

    @property
    def N(self):
        return self.tuples.shape[1]

    @classmethod
    def from_ordered(cls, grid, tuples, probs):
        """Symmetrize a distribution on ordered tuples."""
        return cls(grid, *_aggregate(np.sort(np.asarray(tuples, int), axis=1), probs))


@dataclass(eq=False)
class Mixture:
    """sum_k weights[k] * Pi_s(factors[k][0] x ... x factors[k][N-1])."""

    grid: GridDensity
    weights: np.ndarray
    factors: list  # list of (N, ncells) arrays, each row a probability vector

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.factors = [np.atleast_2d(np.asarray(f, dtype=float)) for f in self.factors]
        if len(self.factors) != self.weights.size:
            raise ValueError("one factor list per weight")
        if abs(self.weights.sum() - 1) > 1e-9 or np.any(self.weights < 0):
            raise ValueError("mixture weights must be a probability vector")
        n = {f.shape[0] for f in self.factors}
        if len(n) != 1:
            raise ValueError("all mixture terms need the same particle number")
        for f in self.factors:
            if np.any(np.abs(f.sum(axis=1) - 1) > 1e-9):
                raise ValueError("every factor must be a probability vector")

    @property
    def N(self):
        return self.factors[0].shape[0]


@dataclass(eq=False)
class SectorState:
    """Grand-canonical state: vacuum weight p0 and weighted canonical sectors."""

    grid: GridDensity
    p0: float
    sectors: list  # list of (n, weight, CanonicalState)
    truncation: float = 0.0

    def __post_init__(self):
        total = self.p0 + sum(s[1] for s in self.sectors)
        if abs(total - 1) > 1e-9 or self.p0 < 0 or any(s[1] < 0 for s in self.sectors):
            raise ValueError("sector weights must form a probability vector")


@dataclass(eq=False)
class SiteMixture:
    """sum_k weights[k] * (independent sites of family k).

    ``families[k]`` is a (J_k, ncells) array; row j is the sub-probability
    vector theta q_j, whose total a_j <= 1 is the occupation probability.
    """

    grid: GridDensity
    weights: np.ndarray
    families: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.families = [np.atleast_2d(np.asarray(f, dtype=float)).reshape(-1, self.grid.ncells)
                         for f in self.families]
        if abs(self.weights.sum() - 1) > 1e-9 or np.any(self.weights < 0):
            raise ValueError("family weights must be a probability vector")
        for f in self.families:
            if np.any(f < 0) or np.any(f.sum(axis=1) > 1 + 1e-9):
                raise ValueError("site masses must lie in [0, 1]")


CanonicalState = (SparseJoint, Mixture)
GrandCanonicalState = (SectorState, SiteMixture)


def _aggregate(tuples, probs):
    tuples = np.asarray(tuples, dtype=int)
    probs = np.asarray(probs, dtype=float)
    if tuples.shape[0] == 0:
        return tuples, probs
    uniq, inv = np.unique(tuples, axis=0, return_inverse=True)
    out = np.zeros(uniq.shape[0])
    np.add.at(out, inv.ravel(), probs)
    keep = out > 0
    return uniq[keep], out[keep]


# -- densities --------------------------------------------------------------

def _cell_counts(P):
    g = P.grid
    if isinstance(P, SparseJoint):
        out = np.zeros(g.ncells)
        for k in range(P.N):
            np.add.at(out, P.tuples[:, k], P.probs)
        return out
    if isinstance(P, Mixture):
        return sum(w * f.sum(axis=0) for w, f in zip(P.weights, P.factors))
    if isinstance(P, SectorState):
        out = np.zeros(g.ncells)
        for _, wt, S in P.sectors:
            out += wt * _cell_counts(S)
        return out
    if isinstance(P, SiteMixture):
        return sum(w * f.sum(axis=0) for w, f in zip(P.weights, P.families))
    raise TypeError(f"not a state: {type(P).__name__}")


def density_of(P):
    """One-body density of a canonical or grand-canonical state."""
    return P.grid.with_masses(_cell_counts(P))


def particle_number(P):
    return float(_cell_counts(P).sum())


# -- multiset expansion -----------------------------------------------------

def _term_multisets(factors, cap=SIZE_CAP):
    """Multiset probabilities of Pi_s(q_1 x ... x q_N)."""
    sups = [np.flatnonzero(q > 0) for q in factors]
    size = int(np.prod([s.size for s in sups], dtype=float))
    if size > cap:
        raise TooLarge(f"term expansion needs {size} tuples")
    if size == 0:
        return np.zeros((0, len(factors)), int), np.zeros(0)
    grids = np.meshgrid(*sups, indexing="ij")
    tup = np.stack([g.ravel() for g in grids], axis=1)
    p = np.ones(tup.shape[0])
    for k, q in enumerate(factors):
        p *= q[tup[:, k]]
    return _aggregate(np.sort(tup, axis=1), p)


def to_sparse(P, cap=SIZE_CAP):
    """Expand a canonical state to explicit multisets."""
    if isinstance(P, SparseJoint):
        return P
    parts_t, parts_p = [], []
    total = 0
    for w, f in zip(P.weights, P.factors):
        if w <= 0:
            continue
        t, p = _term_multisets(f, cap - total)
        total += t.shape[0]
        parts_t.append(t)
        parts_p.append(w * p)
    t, p = _aggregate(np.concatenate(parts_t), np.concatenate(parts_p))
    return SparseJoint(P.grid, t, p / p.sum())


def _multiset_entropy(tuples, probs, v):
    """-sum P log(P prod mult! / v^n) for rows of sorted cell tuples."""
    keep = probs > 0
    tuples, probs = tuples[keep], probs[keep]
    if tuples.shape[0] == 0:
        return 0.0
    n = tuples.shape[1]
    logmult = np.zeros(tuples.shape[0])
    if n > 1:
        # run lengths of equal consecutive entries in each sorted row
        run = np.ones(tuples.shape[0])
        for k in range(1, n):
            same = tuples[:, k] == tuples[:, k - 1]
            run = np.where(same, run + 1, 1.0)
            logmult += np.where(same, np.log(run), 0.0)
    return float(-np.sum(probs * (np.log(probs) + logmult - n * log(v))))


def _q_entropy(q, v):
    """-sum q log(q/v) over cells: entropy of a one-body cell distribution."""
    q = q[q > 0]
    return float(-np.sum(q * np.log(q / v)))


def _term_entropy(factors, v, cap=SIZE_CAP):
    """Entropy of Pi_s(q_1 x ... x q_N)."""
    n = len(factors)
    sups = [set(np.flatnonzero(q > 0)) for q in factors]
    # group identical factors; the closed form needs distinct groups disjoint
    groups = []
    for i in range(n):
        for g in groups:
            if np.array_equal(factors[g[0]], factors[i]):
                g.append(i)
                break
        else:
            groups.append([i])
    disjoint = all(not (sups[a[0]] & sups[b[0]])
                   for a, b in itertools.combinations(groups, 2))
    if disjoint:
        return sum(len(g) * _q_entropy(factors[g[0]], v) - lgamma(len(g) + 1) for g in groups)
    t, p = _term_multisets(factors, cap)
    return _multiset_entropy(t, p, v)


def _terms_intersect(fa, fb):
    """Whether two product terms give positive mass to a common multiset."""
    n = len(fa)
    sa = [q > 0 for q in fa]
    sb = [q > 0 for q in fb]
    adj = np.array([[np.any(sa[i] & sb[j]) for j in range(n)] for i in range(n)])
    if not adj.any():
        return False
    match = maximum_bipartite_matching(csr_matrix(adj.astype(int)), perm_type="column")
    return bool(np.all(match >= 0))


def _canonical_entropy(P, cap=SIZE_CAP):
    v = P.grid.cell_volume
    if isinstance(P, SparseJoint):
        return _multiset_entropy(P.tuples, P.probs, v)
    live = [(w, f) for w, f in zip(P.weights, P.factors) if w > 0]
    if len(live) == 1:
        return _term_entropy(live[0][1], v, cap)
    overlap = any(_terms_intersect(a[1], b[1]) for a, b in itertools.combinations(live, 2))
    if not overlap:
        return sum(w * _term_entropy(f, v, cap) - w * log(w) for w, f in live)
    try:
        S = to_sparse(P, cap)
    except TooLarge as exc:
        raise SupportOverlap("mixture terms overlap and the expansion is too large") from exc
    return _multiset_entropy(S.tuples, S.probs, v)


def _sites_disjoint(fam):
    occ = (fam > 0).sum(axis=0)
    return bool(np.all(occ <= 1))


def _site_family_entropy(fam, v):
    if not _sites_disjoint(fam):
        raise SupportOverlap("site supports overlap")
    ent = 0.0
    for s in fam:
        a = s.sum()
        ent += _q_entropy(s, v)
        if 0 < a < 1:
            ent -= (1 - a) * log(1 - a)
    return ent


def _site_multisets(fam, cap):
    """Distribution of occupied-cell multisets for independent sites."""
    dist = {(): 1.0}
    for s in fam:
        a = s.sum()
        cells = np.flatnonzero(s > 0)
        nxt = defaultdict(float)
        for conf, p in dist.items():
            if a < 1:
                nxt[conf] += p * (1 - a)
            for c in cells:
                nxt[tuple(sorted(conf + (int(c),)))] += p * s[c]
        dist = nxt
        if len(dist) > cap:
            raise TooLarge("site expansion exceeds the size cap")
    return dist


def gc_multisets(P, cap=10 ** 6):
    """Dict n -> (tuples, probs) for a grand-canonical state, vacuum under n=0."""
    acc = defaultdict(float)
    if isinstance(P, SectorState):
        if P.p0 > 0:
            acc[()] += P.p0
        for _, wt, S in P.sectors:
            S = to_sparse(S, cap)
            for t, p in zip(S.tuples, S.probs):
                acc[tuple(int(c) for c in t)] += wt * p
    else:
        for wt, fam in zip(P.weights, P.families):
            for conf, p in _site_multisets(fam, cap).items():
                acc[conf] += wt * p
    by_n = defaultdict(lambda: ([], []))
    for conf, p in acc.items():
        by_n[len(conf)][0].append(conf)
        by_n[len(conf)][1].append(p)
    return {n: (np.array(t, dtype=int).reshape(len(t), n), np.array(p))
            for n, (t, p) in sorted(by_n.items())}


def _gc_entropy(P, mode):
    v = P.grid.cell_volume
    if isinstance(P, SectorState):
        ent = -P.p0 * log(P.p0) if P.p0 > 0 else 0.0
        for _, wt, S in P.sectors:
            if wt > 0:
                ent += wt * _canonical_entropy(S) - wt * log(wt)
        return ent
    live = [(w, f) for w, f in zip(P.weights, P.families) if w > 0]
    if len(live) == 1:
        return _site_family_entropy(live[0][1], v)
    if mode == "concave":
        return sum(w * _site_family_entropy(f, v) for w, f in live)
    try:
        parts = gc_multisets(P)
    except TooLarge as exc:
        raise SupportOverlap("site families overlap and the expansion is too large") from exc
    return sum(_multiset_entropy(t, p, v) for t, p in parts.values())


def entropy(P, mode="exact"):
    """Entropy -int P log(N! P) (canonical) or the sum over sectors (grand-canonical).

    ``mode="concave"`` replaces the entropy of a multi-family SiteMixture by
    sum_k w_k S(P_k), a lower bound that avoids expanding the mixture.
    """
    if isinstance(P, CanonicalState):
        return _canonical_entropy(P)
    return _gc_entropy(P, mode)


def interaction_energy(P, w, table=None):
    """Expected sum of pair energies using cell-center distances."""
    table = table or PairTable(P.grid, w)
    if isinstance(P, SparseJoint):
        if P.N < 2:
            return 0.0
        E = np.array([config_energy(table, t) for t in P.tuples])
        pos = P.probs > 0
        if np.any(np.isinf(E[pos])):
            return inf
        return float(np.sum(P.probs[pos] * E[pos]))
    if isinstance(P, Mixture):
        total = 0.0
        for wt, f in zip(P.weights, P.factors):
            if wt <= 0:
                continue
            for i, j in itertools.combinations(range(f.shape[0]), 2):
                e = table.form(f[i], f[j])
                if np.isinf(e):
                    return inf
                total += wt * e
        return total
    if isinstance(P, SectorState):
        total = 0.0
        for _, wt, S in P.sectors:
            if wt > 0:
                e = interaction_energy(S, w, table)
                if np.isinf(e):
                    return inf
                total += wt * e
        return total
    if isinstance(P, SiteMixture):
        total = 0.0
        for wt, fam in zip(P.weights, P.families):
            if wt <= 0:
                continue
            e = _site_energy(fam, table)
            if np.isinf(e):
                return inf
            total += wt * e
        return total
    raise TypeError(f"not a state: {type(P).__name__}")


def _site_energy(fam, table):
    live = np.flatnonzero(fam.sum(axis=1) > 0)
    if live.size < 2:
        return 0.0
    cells = np.flatnonzero(fam[live].sum(axis=0) > 0)
    W = table.matrix(cells)
    S = fam[np.ix_(live, cells)]
    # pairs of distinct sites only: subtract the same-site contributions
    tot = S.sum(axis=0)
    mask = tot > 0
    Wm = W[np.ix_(mask, mask)]
    Sm = S[:, mask]
    if np.any(np.isinf(Wm)):
        # a forbidden cell pair may still only occur within one site
        for i in range(Sm.shape[0]):
            for j in range(i + 1, Sm.shape[0]):
                a, b = Sm[i] > 0, Sm[j] > 0
                if np.any(np.isinf(Wm[np.ix_(a, b)])):
                    return inf
        Wm = np.where(np.isinf(Wm), 0.0, Wm)
    full = tot[mask] @ Wm @ tot[mask]
    same = sum(s @ Wm @ s for s in Sm)
    return float(0.5 * (full - same))


def free_energy(P, w, T, mode="exact", table=None):
    """Interaction energy minus T times entropy; entropy is skipped at T = 0."""
    E = interaction_energy(P, w, table)
    if T == 0:
        return E
    return E - T * entropy(P, mode)


# -- standard states --------------------------------------------------------

def product_state(rho, N=None):
    """(rho/N)^{x N} as a one-term mixture."""
    m = rho.masses
    N = int(round(m.sum())) if N is None else int(N)
    q = m / m.sum()
    return Mixture(rho, [1.0], [np.tile(q, (N, 1))])


def poisson_state(rho, nMax):
    """Sectors e^{-m} m^n / n! rho^{x n} up to nMax, renormalized."""
    m = rho.masses
    tot = float(m.sum())
    if tot == 0:
        return SectorState(rho, 1.0, [])
    n = np.arange(nMax + 1)
    logw = -tot + n * log(tot) - np.array([lgamma(k + 1) for k in n])
    wts = np.exp(logw)
    rem = max(0.0, 1.0 - wts.sum())
    if rem >= 1e-9:
        raise TruncationTooSevere(f"Poisson remainder {rem:.3g} with nMax={nMax}")
    wts = wts / wts.sum()
    q = m / tot
    sectors = [(int(k), float(wts[k]), Mixture(rho, [1.0], [np.tile(q, (int(k), 1))]))
               for k in range(1, nMax + 1)]
    return SectorState(rho, float(wts[0]), sectors, truncation=rem)


def default_nmax(total):
    return int(np.ceil(total + 6 * np.sqrt(total))) + 10


# -- transforms -------------------------------------------------------------

def block_approximation(P, chi, rho):
    """Replace P by sum_B P(chi_B) Pi_s(x_{b in B} rho chi_b / int rho chi_b).

    ``chi`` is a (J, ncells) partition of unity on the support of rho.
    """
    S = to_sparse(P)
    chi = np.asarray(chi, dtype=float)
    mvec = rho.masses
    blocks_of = [np.flatnonzero(chi[:, c] > 0) for c in range(chi.shape[1])]
    acc = defaultdict(float)
    for t, p in zip(S.tuples, S.probs):
        choices = [blocks_of[c] for c in t]
        for combo in itertools.product(*choices):
            wt = p * np.prod([chi[b, c] for b, c in zip(combo, t)])
            if wt > 0:
                acc[tuple(sorted(int(b) for b in combo))] += wt
    keys = sorted(acc)
    bmass = chi @ mvec
    factors = []
    for B in keys:
        factors.append(np.array([chi[b] * mvec / bmass[b] for b in B]))
    wts = np.array([acc[B] for B in keys])
    out = Mixture(rho.with_masses(mvec), wts / wts.sum(), factors)
    out.blocks = keys
    return out


def geometric_localization(P, theta):
    """Localize a single product term q_1 x ... x q_N (disjoint q_j) by theta."""
    if not isinstance(P, Mixture):
        raise TypeError("pass a one-term Mixture")
    if P.weights.size != 1:
        raise SupportOverlap("geometric localization needs a single tensor product")
    qs = P.factors[0]
    if not _sites_disjoint(qs):
        raise SupportOverlap("tensor factors must have disjoint supports")
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (qs.shape[1],))
    if np.any(theta < 0) or np.any(theta > 1):
        raise ValueError("theta must lie in [0, 1]")
    return SiteMixture(P.grid, [1.0], [qs * theta])


# -- serialization ----------------------------------------------------------

def state_to_json(P):
    if isinstance(P, SparseJoint):
        return {"kind": "sparseJoint", "N": P.N, "tuples": P.tuples.tolist(),
                "probs": P.probs.tolist()}
    if isinstance(P, Mixture):
        terms = []
        for w, f in zip(P.weights, P.factors):
            terms.append({"weight": float(w), "factors": [
                {"cells": np.flatnonzero(q > 0).tolist(), "probs": q[q > 0].tolist()}
                for q in f]})
        return {"kind": "mixture", "N": P.N, "terms": terms}
    if isinstance(P, SectorState):
        return {"kind": "sectors", "p0": P.p0, "truncation": P.truncation,
                "sectors": [{"n": n, "weight": wt, "state": state_to_json(S)}
                            for n, wt, S in P.sectors]}
    if isinstance(P, SiteMixture):
        return {"kind": "siteMixture", "families": [
            {"weight": float(w), "sites": [
                {"cells": np.flatnonzero(s > 0).tolist(), "probs": s[s > 0].tolist()}
                for s in fam]} for w, fam in zip(P.weights, P.families)]}
    raise TypeError(f"not a state: {type(P).__name__}")


def _dense(entry, n):
    q = np.zeros(n)
    q[np.asarray(entry["cells"], int)] = entry["probs"]
    return q


def state_from_json(obj, grid):
    kind = obj["kind"]
    n = grid.ncells
    if kind == "sparseJoint":
        return SparseJoint(grid, np.asarray(obj["tuples"], int).reshape(-1, obj["N"]),
                           obj["probs"])
    if kind == "mixture":
        return Mixture(grid, [t["weight"] for t in obj["terms"]],
                       [np.array([_dense(f, n) for f in t["factors"]]) for t in obj["terms"]])
    if kind == "sectors":
        return SectorState(grid, obj["p0"], [(s["n"], s["weight"], state_from_json(s["state"], grid))
                                            for s in obj["sectors"]], obj.get("truncation", 0.0))
    if kind == "siteMixture":
        return SiteMixture(grid, [f["weight"] for f in obj["families"]],
                           [np.array([_dense(s, n) for s in f["sites"]]).reshape(-1, n)
                            for f in obj["families"]])
    raise ValueError(f"unknown state kind {kind!r}")
