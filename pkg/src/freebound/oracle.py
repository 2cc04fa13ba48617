"""Exact desk-scale values of F_T[rho] and G_T[rho] on a grid.

The discrete problem is the one the states module evaluates: symmetric
states that are uniform inside cells, with pair energies taken between cell
centers (and the cell self-average for two particles in one cell).

* T = 0: a linear program over multisets of support cells.
* T > 0: maximization of the concave dual

      D(phi) = sum_c phi_c m_c - T log Z(phi),
      Z(phi) = sum_M exp((sum_{x in M} phi_x - E(M)) / T) v^n / prod_c mult_c(M)!

  whose maximizer is the Gibbs state with the prescribed cell masses.
  The sum runs over n = N (canonical) or n = 0..nMax (grand-canonical).
  Pure 1D hard rods use a transfer recursion instead of enumeration.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from math import ceil, inf, isinf, lgamma, log, sqrt

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.sparse import csr_matrix
from scipy.special import logsumexp

from .density import mass
from .errors import Infeasible, NotApplicable, NotConverged, TooLarge
from .states import PairTable, SparseJoint

ENUM_CAP = 10 ** 7
GRAD_TOL = 1e-6
MAX_ITERS = 20000


def is_zero_potential(w):
    if w is None:
        return True
    return w.kind == "tabulated" and not np.any(w.table[:, 1])


@dataclass
class DualPotential:
    """V~ = T log rho - phi on support cells (nan elsewhere)."""

    values: np.ndarray
    converged: bool
    gap: float


@dataclass
class OracleResult:
    value: float
    ensemble: str
    method: str
    primal: float = None
    dual: float = None
    gap: float = 0.0
    converged: bool = True
    iterations: int = 0
    potential: DualPotential = None
    state: object = None
    details: dict = field(default_factory=dict)

    def to_json(self):
        out = {"value": self.value, "ensemble": self.ensemble, "method": self.method,
               "primal": self.primal, "dual": self.dual, "gap": self.gap,
               "converged": self.converged, "iterations": self.iterations}
        if self.potential is not None:
            out["dualPotential"] = [None if np.isnan(x) else float(x)
                                    for x in self.potential.values]
        out.update(self.details)
        return out


# -- configuration enumeration ------------------------------------------------

class ConfigSet:
    """Multisets of support cells with finite energy, as a sparse count matrix."""

    def __init__(self, cells, tuples_by_n, energies_by_n, v):
        self.cells = cells
        self.v = v
        rows, cols, vals, E, logg, sizes = [], [], [], [], [], []
        r = 0
        self.tuples = []
        for n in sorted(tuples_by_n):
            tup, en = tuples_by_n[n], energies_by_n[n]
            for t, e in zip(tup, en):
                uniq, cnt = np.unique(t, return_counts=True)
                rows.extend([r] * uniq.size)
                cols.extend(uniq.tolist())
                vals.extend(cnt.tolist())
                E.append(e)
                logg.append(sum(lgamma(c + 1) for c in cnt) - n * log(v))
                sizes.append(n)
                self.tuples.append(tuple(int(cells[i]) for i in t))
                r += 1
        self.counts = csr_matrix((vals, (rows, cols)), shape=(r, len(cells)), dtype=float)
        self.energy = np.array(E, dtype=float)
        self.logg = np.array(logg, dtype=float)
        self.sizes = np.array(sizes, dtype=int)

    def __len__(self):
        return self.energy.size


def _enumerate(W, sizes, allow_repeat, cap=ENUM_CAP):
    """All multisets of indices with finite pair sums, grouped by size."""
    n = W.shape[0]
    finite = np.isfinite(W)
    out_t = {0: np.zeros((1, 0), dtype=int)}
    out_e = {0: np.zeros(1)}
    cur_t, cur_e = out_t[0], out_e[0]
    total = 1
    for k in range(1, max(sizes) + 1):
        new_t, new_e = [], []
        chunk = max(1, 2 ** 20 // max(n, 1))
        for s in range(0, cur_t.shape[0], chunk):
            t = cur_t[s:s + chunk]
            e = cur_e[s:s + chunk]
            if k == 1:
                add = np.zeros((t.shape[0], n))
                ok = np.ones((t.shape[0], n), dtype=bool)
            else:
                add = np.zeros((t.shape[0], n))
                ok = np.ones((t.shape[0], n), dtype=bool)
                for col in range(t.shape[1]):
                    row = W[t[:, col]]
                    ok &= finite[t[:, col]]
                    add += np.where(np.isfinite(row), row, 0.0)
                last = t[:, -1][:, None]
                j = np.arange(n)[None, :]
                ok &= (j >= last) if allow_repeat else (j > last)
            ii, jj = np.nonzero(ok)
            new_t.append(np.concatenate([t[ii], jj[:, None]], axis=1))
            new_e.append(e[ii] + add[ii, jj])
        cur_t = np.concatenate(new_t) if new_t else np.zeros((0, k), int)
        cur_e = np.concatenate(new_e) if new_e else np.zeros(0)
        total += cur_t.shape[0]
        if total > cap:
            raise TooLarge(f"more than {cap} configurations")
        if cur_t.shape[0] == 0:
            break
        out_t[k], out_e[k] = cur_t, cur_e
    return ({k: out_t[k] for k in sizes if k in out_t},
            {k: out_e[k] for k in sizes if k in out_e})


def build_configs(rho, w, sizes, cap=ENUM_CAP):
    cells = rho.support
    if w is None or is_zero_potential(w):
        W = np.zeros((cells.size, cells.size))
    else:
        W = PairTable(rho, w).matrix(cells)
    allow_repeat = bool(np.all(np.isfinite(np.diag(W))))
    t, e = _enumerate(W, list(sizes), allow_repeat, cap)
    return ConfigSet(cells, t, e, rho.cell_volume)


# -- hard-core certificates ------------------------------------------------------

def clique_certificate(rho, r0):
    """A set of cells that pairwise conflict (center distance < r0) with mass > 1.

    Candidate sets are the cells whose centers lie in an open ball of radius
    r0/2 around some cell center or cell corner.  Returns the cell list or None.
    """
    if r0 <= 0:
        return None
    cells = rho.support
    if cells.size == 0:
        return None
    pts = rho.centers()[cells]
    m = rho.masses[cells]
    h = np.array(rho.spacing)
    cand = [pts] + [pts + h * (np.array(sgn) - 0.5) for sgn in np.ndindex(*(2,) * rho.dim)]
    best, best_set = 0.0, None
    for c in cand:
        for x in c:
            inside = np.sqrt(np.sum((pts - x) ** 2, axis=1)) < r0 / 2
            tot = m[inside].sum()
            if tot > best:
                best, best_set = tot, cells[inside]
    if best > 1 + 1e-12:
        return best_set.tolist()
    return None


def _hard_range(w):
    return w is not None and isinf(w.alpha) and w.r0 > 0


# -- linear programs (T = 0) -----------------------------------------------------

def _lp(rho, cs, with_normalization):
    m = rho.masses[cs.cells]
    A = cs.counts.T.tocsr()
    b = m
    if with_normalization:
        from scipy.sparse import vstack
        A = vstack([A, csr_matrix(np.ones((1, len(cs))))]).tocsr()
        b = np.concatenate([m, [1.0]])
    res = linprog(cs.energy, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status == 2:
        raise Infeasible("no state with this density on the grid")
    if res.status != 0:
        raise NotConverged(res.message)
    return res


def _canonical_T0(rho, w, N):
    cs = build_configs(rho, w, [N])
    if len(cs) == 0:
        raise Infeasible("no admissible configuration")
    res = _lp(rho, cs, False)
    x = np.clip(res.x, 0, None)
    keep = x > 1e-14
    tup = np.array([cs.tuples[i] for i in np.flatnonzero(keep)], dtype=int).reshape(-1, N)
    state = SparseJoint(rho, tup, x[keep] / x[keep].sum())
    return OracleResult(float(res.fun), "canonical", "lp", primal=float(res.fun),
                        dual=float(res.fun), state=state,
                        details={"configurations": len(cs)})


def _gc_T0(rho, w, nmax):
    cs = build_configs(rho, w, range(0, nmax + 1))
    res = _lp(rho, cs, True)
    return OracleResult(float(res.fun), "gc", "lp", primal=float(res.fun), dual=float(res.fun),
                        details={"configurations": len(cs), "nMax": nmax})


# -- dual ascent (T > 0) --------------------------------------------------------

class _EnumModel:
    def __init__(self, cs, T):
        self.cs = cs
        self.T = T
        self.base = (-cs.energy / T) - cs.logg

    def logz_marg(self, phi):
        a = self.base + (self.cs.counts @ phi) / self.T
        lz = logsumexp(a)
        p = np.exp(a - lz)
        return lz, self.cs.counts.T @ p, p


class _RodModel:
    """Pure 1D hard rods: occupied cells at index distance >= k."""

    def __init__(self, n, k, v, T):
        self.n, self.k, self.v, self.T = n, k, v, T

    def logz_marg(self, phi):
        n, k = self.n, self.k
        logz_c = np.log(self.v) + phi / self.T
        A = np.zeros(n + 1)  # A[i]: subsets of cells < i
        for i in range(1, n + 1):
            prev = A[i - k] if i - k >= 0 else 0.0
            A[i] = np.logaddexp(A[i - 1], logz_c[i - 1] + prev)
        B = np.zeros(n + 1)  # B[i]: subsets of cells >= i
        for i in range(n - 1, -1, -1):
            nxt = B[i + k] if i + k <= n else 0.0
            B[i] = np.logaddexp(B[i + 1], logz_c[i] + nxt)
        lz = A[n]
        left = np.array([A[c - k + 1] if c - k + 1 >= 0 else 0.0 for c in range(n)])
        right = np.array([B[c + k] if c + k <= n else 0.0 for c in range(n)])
        marg = np.exp(logz_c + left + right - lz)
        return lz, marg, None


def _ascent(model, m, T, phi0):
    """Maximize D(phi) = phi.m - T log Z; returns phi, D, grad, iterations."""

    def D(phi):
        lz, marg, _ = model.logz_marg(phi)
        return float(phi @ m - T * lz), m - marg, marg

    phi = phi0.copy()
    val, grad, marg = D(phi)
    it = 0
    for it in range(1, MAX_ITERS + 1):
        if np.max(np.abs(grad)) < GRAD_TOL:
            break
        if np.any(marg <= 0):
            raise Infeasible("some support cell carries no admissible configuration")
        step = T * (np.log(m) - np.log(marg))
        slope = float(grad @ step)
        t = 1.0
        for _ in range(60):
            cand = phi + t * step
            cval, cgrad, cmarg = D(cand)
            if cval >= val + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        phi, val, grad, marg = cand, cval, cgrad, cmarg
    if np.max(np.abs(grad)) >= GRAD_TOL:
        res = minimize(lambda p: (-D(p)[0], -D(p)[1]), phi, jac=True, method="L-BFGS-B",
                       options={"gtol": GRAD_TOL / 10, "maxiter": 20000, "ftol": 1e-15})
        if -res.fun >= val:
            phi = res.x
            val, grad, marg = D(phi)
    if np.max(np.abs(grad)) >= GRAD_TOL:
        raise NotConverged(f"dual gradient {np.max(np.abs(grad)):.3g} after {it} iterations")
    return phi, val, grad, it


def _finish(rho, phi, val, grad, it, T, ens, method, cs=None, model=None, extra=None):
    cells = rho.support
    vt = np.full(rho.ncells, np.nan)
    vt[cells] = T * np.log(rho.flat[cells]) - phi
    primal = None
    if cs is not None:
        _, _, p = model.logz_marg(phi)
        pos = p > 0
        ent = -float(np.sum(p[pos] * (np.log(p[pos]) + cs.logg[pos])))
        primal = float(p @ cs.energy) - T * ent
    gap = (primal - val) if primal is not None else float(np.max(np.abs(grad)))
    res = OracleResult(val, ens, method, primal=primal, dual=val, gap=gap, iterations=it,
                       potential=DualPotential(vt, True, gap),
                       details=dict(extra or {}, gradNorm=float(np.max(np.abs(grad)))))
    return res


def default_nmax(rho):
    """Smallest n with Poisson(N) tail beyond n below 1e-9."""
    from scipy.stats import poisson
    N = mass(rho)
    n = int(ceil(N))
    while poisson.sf(n, N) >= 1e-9:
        n += 1
    return n


def exact_canonical(rho, w, T, N=None):
    """F_T[rho] for integer mass N <= 3 (LP at T = 0, dual ascent for T > 0)."""
    Nf = mass(rho)
    N = int(round(Nf)) if N is None else int(N)
    if abs(Nf - N) > 1e-9 * max(1, Nf) or N < 1:
        raise NotApplicable(f"canonical oracle needs a positive integer mass, got {Nf:.12g}")
    if N > 3:
        raise TooLarge("canonical oracle handles N <= 3")
    if rho.support.size ** N > ENUM_CAP:
        raise TooLarge(f"{rho.support.size}^{N} tuples exceed the cap")
    if _hard_range(w) and clique_certificate(rho, w.r0) is not None:
        raise Infeasible("a set of mutually conflicting cells carries mass > 1")
    m = rho.masses[rho.support]
    v = rho.cell_volume
    if N == 1:
        val = T * float(np.sum(m * np.log(m / v)))
        return OracleResult(val, "canonical", "closed-form", primal=val, dual=val)
    if T == 0:
        return _canonical_T0(rho, w, N)
    if is_zero_potential(w):
        val = T * (float(np.sum(m * np.log(m / v))) - N * log(N) + lgamma(N + 1))
        return OracleResult(val, "canonical", "closed-form", primal=val, dual=val)
    cs = build_configs(rho, w, [N])
    if len(cs) == 0:
        raise Infeasible("no admissible configuration")
    model = _EnumModel(cs, T)
    phi, val, grad, it = _ascent(model, m, T, T * np.log(m / v))
    return _finish(rho, phi, val, grad, it, T, "canonical", "dual-ascent", cs, model,
                   {"configurations": len(cs)})


def exact_grand_canonical(rho, w, T, nmax=None):
    """G_T[rho] by the grand-canonical dual (T > 0) or LP (T = 0)."""
    if rho.support.size == 0:
        return OracleResult(0.0, "gc", "closed-form", primal=0.0, dual=0.0)
    if _hard_range(w):
        cert = clique_certificate(rho, w.r0)
        if cert is not None:
            raise Infeasible(f"cells {cert[:8]}... conflict pairwise and carry mass > 1")
    m = rho.masses[rho.support]
    v = rho.cell_volume
    if is_zero_potential(w) and T > 0:
        val = T * float(np.sum(m * (np.log(m / v) - 1)))
        return OracleResult(val, "gc", "closed-form", primal=val, dual=val)
    nmax = default_nmax(rho) if nmax is None else int(nmax)
    if T == 0:
        return _gc_T0(rho, w, nmax)
    if (rho.dim == 1 and w is not None and w.kind == "hardCore" and not w.tail
            and np.all(rho.flat > 0)):
        h = rho.spacing[0]
        k = max(1, int(ceil(w.r0 / h - 1e-9)))
        model = _RodModel(rho.ncells, k, v, T)
        phi, val, grad, it = _ascent(model, m, T, T * np.log(m / v))
        return _finish(rho, phi, val, grad, it, T, "gc", "transfer", extra={"exclusion": k})
    if rho.dim == 1 and w is not None and w.kind == "hardCore" and not w.tail:
        # zero cells break the rod chain; treat them with zero activity
        h = rho.spacing[0]
        k = max(1, int(ceil(w.r0 / h - 1e-9)))
        return _rods_with_gaps(rho, k, T)
    cs = build_configs(rho, w, range(0, nmax + 1))
    model = _EnumModel(cs, T)
    phi, val, grad, it = _ascent(model, m, T, T * np.log(m / v))
    return _finish(rho, phi, val, grad, it, T, "gc", "dual-ascent", cs, model,
                   {"configurations": len(cs), "nMax": nmax})


class _MaskedRodModel(_RodModel):
    def __init__(self, n, k, v, T, support):
        super().__init__(n, k, v, T)
        self.support = support

    def logz_marg(self, phi_s):
        phi = np.full(self.n, -np.inf)
        phi[self.support] = phi_s
        with np.errstate(invalid="ignore"):
            lz, marg, _ = super().logz_marg(phi)
        return lz, marg[self.support], None


def _rods_with_gaps(rho, k, T):
    sup = rho.support
    m = rho.masses[sup]
    v = rho.cell_volume
    model = _MaskedRodModel(rho.ncells, k, v, T, sup)
    phi, val, grad, it = _ascent(model, m, T, T * np.log(m / v))
    return _finish(rho, phi, val, grad, it, T, "gc", "transfer", extra={"exclusion": k})


# -- cache ----------------------------------------------------------------------

def _cache_key(rho, w, T, ensemble, extra):
    payload = json.dumps([rho.content_hash(), None if w is None else w.content_hash(),
                          repr(float(T)), ensemble, extra], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def cached_oracle(rho, w, T, ensemble="canonical", **kw):
    """Oracle value, memoized in $FREEBOUND_CACHE/oracle_cache.json when set."""
    from .bounds import ensemble_name
    ens = ensemble_name(ensemble)
    root = os.environ.get("FREEBOUND_CACHE")
    key = _cache_key(rho, w, T, ens, sorted(kw.items()))
    path = os.path.join(root, "oracle_cache.json") if root else None
    if path and os.path.exists(path):
        with open(path) as fh:
            store = json.load(fh)
        if key in store:
            return store[key]
    fn = exact_canonical if ens == "canonical" else exact_grand_canonical
    value = fn(rho, w, T, **kw).value
    if path:
        os.makedirs(root, exist_ok=True)
        store = {}
        if os.path.exists(path):
            with open(path) as fh:
                store = json.load(fh)
        store[key] = value
        with open(path, "w") as fh:
            json.dump(store, fh, sort_keys=True)
    return value


# -- sandwich ---------------------------------------------------------------------

SLACK_TOL = -1e-6


def _chain(entries):
    """entries: list of (name, value); checks consecutive <= with slacks."""
    links = []
    ok = True
    for (ln, lv), (rn, rv) in zip(entries[:-1], entries[1:]):
        if isinf(lv) and isinf(rv) and lv == rv:
            slack = 0.0
        else:
            slack = rv - lv
        good = slack >= SLACK_TOL
        ok &= good
        links.append({"lhs": ln, "rhs": rn, "lhsValue": lv, "rhsValue": rv,
                      "slack": slack, "ok": bool(good)})
    return ok, links


def verify_sandwich(rho, w, T, ensemble="canonical", oracle_value=None):
    """lower_bound <= oracle <= free energy of the matching trial <= closed-form bound."""
    from . import bounds as B
    from . import constructions as C
    from .covering import besicovitch_cubes
    from .states import free_energy, poisson_state, product_state
    from .states import default_nmax as st_nmax

    ens = B.ensemble_name(ensemble)
    d = rho.dim
    lower = B.lower_bound(rho, w, T, ens)
    if oracle_value is None:
        fn = exact_canonical if ens == B.CANONICAL else exact_grand_canonical
        oracle_value = fn(rho, w, T).value
    entries = [("lower_bound", lower.value), ("oracle", oracle_value)]
    construction, bound = None, None
    note = None
    try:
        if w is not None and not isinf(w.alpha) and w.alpha < d:
            if ens == B.CANONICAL:
                trial, construction = product_state(rho), "product_state"
            else:
                trial, construction = poisson_state(rho, st_nmax(mass(rho))), "poisson_state"
            bound = B.mean_field_upper(rho, w, T, ens)
            tf = free_energy(trial, w, T)
        elif w is not None and isinf(w.alpha):
            if ens == B.GRAND and d == 1 and w.kind == "hardCore" and not w.tail:
                bound = B.percus_exact_1d(rho, w.r0, T)
                entries = [("lower_bound", lower.value), ("oracle", oracle_value),
                           ("percus_exact_1d", bound.value)]
                ok, links = _chain(entries)
                links[-1]["ok"] = abs(links[-1]["slack"]) <= 2e-2 * max(1.0, abs(bound.value))
                return {"ok": bool(ok or links[-1]["ok"]) and links[0]["ok"], "links": links,
                        "construction": None, "bound": bound.name}
            if ens == B.GRAND:
                reps = [r for r in B.hard_core_bounds(rho, w, T) if r.name == "thm_2_7"]
                if not reps:
                    raise NotApplicable("no grand-canonical hard-core bound applies")
                bound = reps[0]
                trial = C.floating_crystal_localized(rho, w, bound.constants["epsilon"])
                construction = "floating_crystal_localized"
                tf = free_energy(trial, w, T, mode="concave")
            else:
                raise NotApplicable("no canonical hard-core construction at desk scale")
        elif ens == B.CANONICAL and d == 1:
            trial, construction = C.trial_1d(rho), "trial_1d"
            bound = B.canonical_1d_upper(rho, w, T)
            tf = free_energy(trial, w, T)
        elif ens == B.CANONICAL and T == 0:
            trial, construction = C.ot_state_small(rho, w, rule="R"), "ot_state_small"
            bound = B.canonical_T0_upper(rho, w, 1 / 3)
            tf = free_energy(trial, w, T)
        elif ens == B.CANONICAL:
            eps = 0.05
            trial, construction = C.block_ot_trial(rho, w, eps), "block_ot_trial"
            bound = B.ot_block_upper(rho, w, T, eps)
            tf = free_energy(trial, w, T)
        else:
            if mass(rho) > 1:
                trial = C.gc_besicovitch_trial(rho, besicovitch_cubes(rho))
            else:
                trial = C.gc_besicovitch_trial(rho, None)
            construction = "gc_besicovitch_trial"
            bound = B.gc_strong_upper(rho, w, T)
            try:
                tf = free_energy(trial, w, T)
            except Exception:
                tf = free_energy(trial, w, T, mode="concave")
                note = "trial entropy by concavity"
        entries += [(construction, tf), (bound.name, bound.value)]
    except (NotApplicable, Infeasible) as exc:
        note = f"construction skipped: {exc}"
    ok, links = _chain(entries)
    out = {"ok": bool(ok), "links": links, "construction": construction,
           "bound": None if bound is None else bound.name}
    if note:
        out["note"] = note
    return out
