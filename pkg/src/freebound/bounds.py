"""Closed-form lower and upper bounds on F_T and G_T, with term breakdowns.

Every function returns a :class:`BoundReport` whose value is the sum of
its named terms.  Terms proportional to T are listed in ``t_terms`` so the
temperature dependence can be checked directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import e, exp, inf, isinf, log, pi, sqrt

import numpy as np
from scipy import integrate

from .density import (cube_masses, entropy_integral, integral_power, local_radii, mass,
                       min_radius, unit_ball_volume, unit_sphere_area, window_masses_1d)
from .errors import IntegerMass, NotApplicable, NotRepresentable
from .potential import evaluate, tail_l1_bound
from .states import PairTable

CANONICAL = "canonical"
GRAND = "gc"


def ensemble_name(ens):
    key = str(ens).lower().replace("-", "").replace("_", "")
    if key in ("canonical", "c"):
        return CANONICAL
    if key in ("gc", "grandcanonical", "grand"):
        return GRAND
    raise ValueError(f"unknown ensemble {ens!r}")


@dataclass
class BoundReport:
    name: str
    terms: dict
    constants: dict = field(default_factory=dict)
    applicability: dict = field(default_factory=dict)
    exact: bool = False
    kind: str = "upper"
    t_terms: tuple = ()
    details: dict = field(default_factory=dict)

    @property
    def value(self):
        vals = list(self.terms.values())
        if any(isinf(v) and v > 0 for v in vals):
            return inf
        return float(sum(vals))

    @property
    def valid(self):
        return all(bool(v) for v in self.applicability.values())

    def to_json(self):
        return {"name": self.name, "kind": self.kind, "value": self.value,
                "exact": self.exact, "terms": dict(self.terms),
                "constants": dict(self.constants),
                "applicability": dict(self.applicability), "details": dict(self.details)}


@dataclass(frozen=True)
class PackingConstants:
    """rho_c(d): points per volume at unit separation; v_c = 2^-d rho_c |B_1|.

    d=1 is exact.  d=2 is the triangular lattice.  The d=3 value (fcc,
    packing fraction pi/(3 sqrt 2)) is stored but no construction uses it.
    """

    values: tuple = ((1, 1.0), (2, 2 / sqrt(3)), (3, sqrt(2)))

    def rho_c(self, d):
        table = dict(self.values)
        if d not in table:
            raise NotApplicable(f"no packing density stored for d={d}")
        return table[d]

    def v_c(self, d):
        return 2.0 ** (-d) * self.rho_c(d) * unit_ball_volume(d)


# -- shared pieces -------------------------------------------------------------

def _entropy_terms(rho, T, ens):
    ent = entropy_integral(rho)
    terms = {"entropyTerm": T * ent}
    if ens == GRAND:
        terms["massTerm"] = -T * mass(rho)
    return terms


def _check_alpha_range(w, d, need):
    if need == "strong" and (w.alpha < d or isinf(w.alpha)):
        raise NotApplicable(f"needs d <= alpha < inf, got alpha={w.alpha}, d={d}")


def lower_bound(rho, w, T, ensemble=CANONICAL):
    """-(kappa + T) N + T int rho log rho, from stability and the entropy bound."""
    ens = ensemble_name(ensemble)
    N = mass(rho)
    terms = {"stabilityTerm": -w.kappa * N, "entropyTerm": T * (entropy_integral(rho) - N)}
    return BoundReport("lower_bound", terms, {"kappa": w.kappa}, {"ensemble": ens},
                       kind="lower", t_terms=("entropyTerm",))


def double_integral(rho, w):
    """sum_{c,c'} m_c m_c' w(c - c') with the cell self-average on the diagonal."""
    m = rho.masses
    sup = np.flatnonzero(m > 0)
    if sup.size == 0:
        return 0.0
    W = PairTable(rho, w).matrix(sup)
    if np.any(np.isinf(W)):
        return inf
    return float(m[sup] @ W @ m[sup])


def positive_l1(w, d):
    """int_{R^d} w_+ by radial quadrature."""
    f = lambda r: max(evaluate(w, r), 0.0) * r ** (d - 1)
    pts = [w.r0] if w.r0 > 0 else None
    if w.kind == "tabulated":
        pts = sorted(set(list(w.table[:, 0]) + ([w.r0] if w.r0 > 0 else [])))[:50]
    head, _ = integrate.quad(f, 0.0, max(w.r0, 1.0) * 4, points=pts, limit=400)
    tail, _ = integrate.quad(f, max(w.r0, 1.0) * 4, np.inf, limit=400)
    return unit_sphere_area(d) * (head + tail)


def mean_field_upper(rho, w, T, ensemble=CANONICAL):
    """Kirkwood-Monroe trial: product state (canonical) or Poisson state (gc)."""
    ens = ensemble_name(ensemble)
    d = rho.dim
    if w.alpha >= d:
        raise NotApplicable(f"mean-field bound needs alpha < d (alpha={w.alpha})")
    N = mass(rho)
    dbl = double_integral(rho, w)
    factor = 0.5 * (1 - 1 / N) if ens == CANONICAL and N > 0 else 0.5
    if ens == CANONICAL and N > 0 and abs(N - round(N)) > 1e-9:
        raise NotApplicable("canonical mean-field bound needs an integer mass")
    l1 = positive_l1(w, d)
    terms = {"interactionTerm": factor * dbl if N > 0 else 0.0}
    terms.update(_entropy_terms(rho, T, ens))
    second = 0.5 * l1 * integral_power(rho, 2)
    details = {"secondLine": second + sum(v for k, v in terms.items() if k != "interactionTerm"),
               "doubleIntegral": dbl}
    return BoundReport("mean_field_upper", terms, {"wPlusL1": l1, "pairFactor": factor},
                       {"alpha<d": True, "ensemble": ens}, t_terms=tuple(k for k in terms if k != "interactionTerm"),
                       details=details)


def gc_strong_constants(w, d):
    S = unit_sphere_area(d)
    tail = w.kappa * w.s * S * 3 ** d * (4 ** d + 1) / (2 * d * (w.s - d))
    if w.alpha > d:
        core = (w.kappa * w.r0 ** w.alpha * d ** 2 * 3 ** (d + 2 * w.alpha) * 2 ** (7 * d)
                * (4 ** d + 1) ** (1 + w.alpha / d) / (S * (w.alpha - d)))
    else:
        core = w.kappa * w.r0 ** d * 2 ** (7 * d) * 3 ** (3 * d) * (4 ** d + 1) ** 2 / S
    return tail, core


def gc_strong_upper(rho, w, T):
    """Grand-canonical bound for d <= alpha < inf via the cube construction."""
    d = rho.dim
    _check_alpha_range(w, d, "strong")
    if w.s <= d:
        raise NotApplicable("tail exponent must exceed d")
    ctail, ccore = gc_strong_constants(w, d)
    terms = {"tailTerm": ctail * integral_power(rho, 2)}
    consts = {"tailCoefficient": ctail, "coreCoefficient": ccore}
    if w.alpha > d:
        terms["coreTerm"] = ccore * integral_power(rho, 1 + w.alpha / d)
    else:
        lam = 6 ** d * (4 ** d + 1)
        consts["lambda"] = lam
        terms["coreTerm"] = ccore * (4 * d * integral_power(rho, 2)
                                     + integral_power(rho, 2, log_scale=w.r0 ** d))
    terms["entropyTerm"] = T * entropy_integral(rho)
    terms["logTerm"] = 3 * T * d * mass(rho)
    return BoundReport("gc_strong_upper", terms, consts,
                       {"d<=alpha<inf": True}, t_terms=("entropyTerm", "logTerm"))


def _integer_mass(rho):
    N = mass(rho)
    if N > 0 and abs(N - round(N)) > 1e-9 * max(1.0, N):
        raise NotApplicable(f"canonical bound needs integer mass, got {N:.12g}")
    return int(round(N))


def canonical_1d_upper(rho, w, T):
    """One-dimensional canonical bound from the alternating interval split."""
    if rho.dim != 1:
        raise NotApplicable("canonical_1d_upper is one-dimensional")
    if w.alpha < 1 or isinf(w.alpha):
        raise NotApplicable(f"needs 1 <= alpha < inf, got {w.alpha}")
    _integer_mass(rho)
    N = mass(rho)
    k, r0, a, s = w.kappa, w.r0, w.alpha, w.s
    terms = {"tailTerm": 4 * k * s / (s - 1) * integral_power(rho, 2)}
    if a > 1:
        c = 2 ** (3 + 2 * a) / (a - 1) * k * r0 ** a
        terms["coreTerm"] = c * integral_power(rho, 1 + a)
    else:
        c = 2 ** 5 * k * r0
        terms["coreTerm"] = c * (2 * log(2) * integral_power(rho, 2)
                                 + integral_power(rho, 2, log_scale=r0))
    terms["logTerm"] = log(2) * T * N
    terms["entropyTerm"] = T * entropy_integral(rho)
    return BoundReport("canonical_1d_upper", terms,
                       {"tailCoefficient": 4 * k * s / (s - 1), "coreCoefficient": c},
                       {"d=1": True, "1<=alpha<inf": True, "integerMass": True},
                       t_terms=("logTerm", "entropyTerm"))


def t0_constants(w, d, eta):
    """Core and tail coefficients of the zero-temperature canonical bound.

    Shell counting with tau = 2^{1/d} gives a factor eta^{-d} per particle;
    without the maximal-function step the ball at radius eta R(x) costs a
    second factor, hence eta^{-2 alpha} and eta^{-2d}.
    """
    S, B = unit_sphere_area(d), unit_ball_volume(d)
    tau = 2 ** (1 / d)
    tail = (w.kappa * 2 ** (4 * d) * tau ** (2 * d) * S * w.s
            / (d * (w.s - d) * (tau ** d - 1)) * eta ** (-2 * d))
    if w.alpha > d:
        a = w.alpha
        core = (w.kappa * w.r0 ** a * (2 ** d * S / (B * (a - d)))
                * (2 ** (a + 2 * d) * tau ** (a + d) * B ** (a / d) / (tau ** a - 1))
                * eta ** (-2 * a))
        scale = None
    else:
        core = w.kappa * w.r0 ** d * 2 ** (4 * d) * 4 * B * eta ** (-2 * d)
        scale = 2 ** d * B * w.r0 ** d / eta ** (2 * d)
    return tail, core, scale


def canonical_T0_upper(rho, w, eta=1 / 3, constant=None):
    """Zero-temperature bound for states with gaps >= eta (R(x_i) + R(x_j))."""
    d = rho.dim
    _check_alpha_range(w, d, "strong")
    if not (0 < eta <= 1):
        raise NotApplicable("eta must lie in (0, 1]")
    ctail, ccore, scale = t0_constants(w, d, eta)
    if constant is not None:
        ctail, ccore = constant * ctail, constant * ccore
    terms = {"tailTerm": ctail * integral_power(rho, 2)}
    if scale is None:
        terms["coreTerm"] = ccore * integral_power(rho, 1 + w.alpha / d)
    else:
        terms["coreTerm"] = ccore * integral_power(rho, 2, log_scale=scale)
    return BoundReport("canonical_T0_upper", terms,
                       {"tailCoefficient": ctail, "coreCoefficient": ccore, "eta": eta,
                        "tau": 2 ** (1 / d), "logScale": scale},
                       {"d<=alpha<inf": True})


def log_radius_integral(rho, radii=None):
    """int rho log R^d with R measured at every support cell."""
    sup = rho.support
    if radii is None:
        radii = local_radii(rho, rho.centers()[sup])
    else:
        radii = np.asarray(radii)[sup]
    return float(np.sum(rho.masses[sup] * rho.dim * np.log(radii)))


def ot_block_upper(rho, w, T, epsilon=0.05, block_masses=None):
    """Positive-temperature canonical bound for 2 <= d <= alpha < inf."""
    d = rho.dim
    if d < 2:
        raise NotApplicable("ot_block_upper needs d >= 2")
    _check_alpha_range(w, d, "strong")
    if not T > 0:
        raise NotApplicable("ot_block_upper needs T > 0")
    _integer_mass(rho)
    N = mass(rho)
    if N == 0:
        return BoundReport("ot_block_upper", {"zero": 0.0})
    eta = (1 - 8 * epsilon / (1 - epsilon)) / 3
    base = canonical_T0_upper(rho, w, eta)
    B = unit_ball_volume(d)
    terms = dict(base.terms)
    terms["entropyTerm"] = T * entropy_integral(rho)
    terms["logEpsTerm"] = T * d * log(1 + epsilon) * N
    terms["logRadiusTerm"] = T * log_radius_integral(rho)
    terms["blockTerm"] = T / e * 2 ** (4 * d) * 4 * B * epsilon ** (-d) * integral_power(rho, 2)
    consts = dict(base.constants, epsilon=epsilon)
    return BoundReport("ot_block_upper", terms, consts,
                       {"2<=d<=alpha<inf": True, "T>0": True, "integerMass": True},
                       t_terms=("entropyTerm", "logEpsTerm", "logRadiusTerm", "blockTerm"))


# -- hard core -------------------------------------------------------------------

def _gauss_segments(a, b, f, order=8):
    x, wts = np.polynomial.legendre.leggauss(order)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return float(np.sum(wts * f(mid + half * x)) * half)


def percus_exact_1d(rho, r0, T):
    """Exact hard-rod grand-canonical free energy of a 1D density."""
    if rho.dim != 1:
        raise NotApplicable("the Percus formula is one-dimensional")
    wmax = window_masses_1d(rho, r0)
    if wmax >= 1 - 1e-15:
        raise NotRepresentable(f"window mass {wmax:.12g} reaches 1")
    from .density import cumulative_at
    e_ = rho.edges()
    brk = np.unique(np.concatenate([e_, e_ + r0]))
    brk = brk[(brk >= e_[0]) & (brk <= e_[-1])]
    vals = rho.flat
    h = rho.spacing[0]

    def integrand(x):
        c = np.clip(((x - e_[0]) / h).astype(int), 0, rho.ncells - 1)
        win = cumulative_at(rho, x) - cumulative_at(rho, x - r0)
        return vals[c] * np.log1p(-win)

    corr = sum(_gauss_segments(a, b, integrand) for a, b in zip(brk[:-1], brk[1:]) if b > a)
    terms = {"entropyTerm": T * entropy_integral(rho), "massTerm": -T * mass(rho),
             "exclusionTerm": -T * corr}
    return BoundReport("percus_exact_1d", terms, {"r0": r0},
                       {"d=1": True, "windowMass<1": True}, exact=True, kind="exact",
                       t_terms=tuple(terms), details={"maxWindowMass": wmax})


def hard_core_T0_constant(d, s):
    """C with E <= C kappa r0^{-s} N for configurations with gaps >= r0."""
    return 3 ** s * d / (2 * (s - d))


def _choose_remark59_eps(Rrho, r0):
    return min(Rrho / r0 - 1, 1.0) / 100


def hard_core_bounds(rho, w, T, packing=None):
    """Every hard-core bound whose side condition holds, each with its checks."""
    if not isinf(w.alpha):
        raise NotApplicable("hard_core_bounds needs alpha = inf")
    packing = packing or PackingConstants()
    d, r0, s, k = rho.dim, w.r0, w.s, w.kappa
    N = mass(rho)
    ent = entropy_integral(rho)
    C = hard_core_T0_constant(d, s)
    energy = C * k * r0 ** (-s) * N if N > 0 else 0.0
    B = unit_ball_volume(d)
    out, skipped = [], {}
    Rrho = min_radius(rho) if N > 0 else inf

    # simple zero-temperature energy bound, needs a separated state
    if Rrho >= r0 and T == 0:
        out.append(BoundReport("hard_core_T0", {"energyTerm": energy}, {"C": C},
                               {"R_rho>=r0": True}, details={"R_rho": Rrho}))
    else:
        skipped["hard_core_T0"] = f"needs T = 0 and R_rho >= r0 (R_rho={Rrho:.6g})"

    if d == 1:
        win = window_masses_1d(rho, r0) if N > 0 else 0.0
        integer = N == 0 or abs(N - round(N)) <= 1e-9 * max(1.0, N)
        if win <= 0.5 and integer:
            terms = {"energyTerm": (4 * k * s / ((s - 1) * r0)) * N,
                     "logTerm": log(2) * T * N, "entropyTerm": T * ent}
            out.append(BoundReport("remark_3_2", terms, {"tailCoefficient": 4 * k * s / ((s - 1) * r0)},
                                   {"d=1": True, "windowMass<=1/2": True, "integerMass": True},
                                   t_terms=("logTerm", "entropyTerm"), details={"maxWindowMass": win}))
        else:
            skipped["remark_3_2"] = f"window mass {win:.6g} > 1/2 or non-integer mass"

    # grand-canonical cube construction; cubes of side 2 r0 keep gaps >= r0
    thr = 1.0 / (3 ** d * (4 ** d + 1))
    cm = float(cube_masses(rho, rho.centers(), np.full(rho.ncells, 2 * r0)).max()) if N > 0 else 0.0
    if cm < thr:
        terms = {"energyTerm": energy, "logTerm": 3 * d * T * N, "entropyTerm": T * ent}
        out.append(BoundReport("remark_4_4", terms, {"C": C, "cubeSide": 2 * r0},
                               {"cubeMass<threshold": True}, t_terms=("logTerm", "entropyTerm"),
                               details={"maxCubeMass": cm}))
    else:
        skipped["remark_4_4"] = f"cube mass {cm:.6g} >= {thr:.6g}"

    integer = N > 0 and abs(N - round(N)) <= 1e-9 * max(1.0, N)
    if integer and Rrho > r0 and T > 0:
        eps = _choose_remark59_eps(Rrho, r0)
        terms = {"energyTerm": energy, "logEpsTerm": T * d * log(1 + eps) * N,
                 "entropyTerm": T * ent, "logRadiusTerm": T * log_radius_integral(rho),
                 "blockTerm": T / e * 2 ** (4 * d) * 4 * B * eps ** (-d) * integral_power(rho, 2)}
        out.append(BoundReport("remark_5_9", terms, {"C": C, "epsilon": eps},
                               {"R_rho>r0": True, "integerMass": True, "T>0": True},
                               t_terms=("logEpsTerm", "entropyTerm", "logRadiusTerm", "blockTerm"),
                               details={"R_rho": Rrho}))
    elif N == 0:
        out.append(BoundReport("remark_5_9", {"zero": 0.0}, {}, {"R_rho>r0": True}))
    else:
        skipped["remark_5_9"] = "needs integer mass, R_rho > r0 and T > 0"

    try:
        cap = r0 ** (-d) * packing.rho_c(d)
        rmax = float(rho.values.max()) if N > 0 else 0.0
        eps = 1 - (rmax / cap) ** (1 / d) if rmax > 0 else 0.5
        if 0 < eps < 1:
            vc = packing.v_c(d)
            terms = {"energyTerm": energy, "entropyTerm": T * ent,
                     "logTerm": T * log(2 ** d / (eps ** d * vc)) * N}
            out.append(BoundReport("thm_2_7", terms, {"C": C, "epsilon": eps, "v_c": vc,
                                                      "rho_c": packing.rho_c(d)},
                                   {"rho<=(1-eps)^d r0^-d rho_c": True},
                                   t_terms=("entropyTerm", "logTerm")))
        else:
            skipped["thm_2_7"] = f"max density {rmax:.6g} >= packing bound {cap:.6g}"
    except NotApplicable as exc:
        skipped["thm_2_7"] = str(exc)
    for rep in out:
        rep.details.setdefault("skipped", skipped)
    return out


def representability(rho, r0):
    """Necessary, sufficient and (in 1D) exact hard-core representability flags."""
    N = mass(rho)
    Rrho = min_radius(rho) if N > 0 else inf
    out = {"R_rho": Rrho, "necessary": bool(Rrho >= r0 / 2), "sufficient": bool(Rrho >= r0)}
    if rho.dim == 1:
        win = window_masses_1d(rho, r0) if N > 0 else 0.0
        out["exact1D"] = bool(win <= 1 + 1e-12)
        out["maxWindowMass"] = win
    else:
        out["exact1D"] = None
    return out


def gc_from_canonical(rho, F_N, F_N1):
    """(1 - t) F_T[N rho/(N+t)] + t F_T[(N+1) rho/(N+t)] for mass N + t."""
    m = mass(rho)
    N = int(np.floor(m))
    t = m - N
    if t < 1e-12 or t > 1 - 1e-12:
        raise IntegerMass(f"mass {m:.12g} is an integer; use F_T directly")
    terms = {"lowerSector": (1 - t) * F_N, "upperSector": t * F_N1}
    return BoundReport("gc_from_canonical", terms, {"N": N, "t": t}, {"nonIntegerMass": True})


def gc_from_canonical_densities(rho):
    """The two rescaled densities whose F_T values feed gc_from_canonical."""
    m = mass(rho)
    N = int(np.floor(m))
    return rho.scaled(N / m), rho.scaled((N + 1) / m)


def all_bounds(rho, w, T, ensemble=CANONICAL):
    """Every applicable report for the given ensemble, with skipped reasons."""
    ens = ensemble_name(ensemble)
    reports = [lower_bound(rho, w, T, ens)]
    skipped = {}
    cands = [("mean_field_upper", lambda: mean_field_upper(rho, w, T, ens))]
    if ens == GRAND:
        cands.append(("gc_strong_upper", lambda: gc_strong_upper(rho, w, T)))
        if rho.dim == 1 and isinf(w.alpha) and w.kind == "hardCore" and not w.tail:
            cands.append(("percus_exact_1d", lambda: percus_exact_1d(rho, w.r0, T)))
    else:
        cands += [("canonical_1d_upper", lambda: canonical_1d_upper(rho, w, T))]
        if T == 0:
            cands.append(("canonical_T0_upper", lambda: canonical_T0_upper(rho, w)))
        else:
            cands.append(("ot_block_upper", lambda: ot_block_upper(rho, w, T)))
    for name, fn in cands:
        try:
            reports.append(fn())
        except (NotApplicable, NotRepresentable) as exc:
            skipped[name] = str(exc)
    if isinf(w.alpha):
        hc = hard_core_bounds(rho, w, T)
        keep = {"canonical": ("hard_core_T0", "remark_3_2", "remark_5_9"),
                "gc": ("hard_core_T0", "remark_4_4", "thm_2_7")}[ens]
        reports += [r for r in hc if r.name in keep]
    return reports, skipped
