"""Radial pair potentials with a core/tail envelope.

Every potential satisfies ``w(r) <= kappa * (1_{r<r0} (r0/r)^alpha + 1/(1+r^s))``
with ``alpha = inf`` encoding a hard core (``w = +inf`` inside ``r0``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import inf, isinf

import numpy as np

from .density import unit_sphere_area
from .errors import TailNotIntegrable

KINDS = ("envelope", "hardCore", "powerLaw", "tabulated")


def _parse_float(v):
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return inf
        if s == "-inf":
            return -inf
    return float(v)


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Interaction w with envelope constants (kappa, r0, alpha, s).

    ``tail`` only matters for ``hardCore``: when False the potential is a
    pure hard core (zero outside r0), which is still dominated by the
    envelope and is what the 1D Percus formula describes.
    """

    kind: str
    kappa: float
    r0: float
    alpha: float
    s: float
    table: np.ndarray | None = None
    tail: bool = True
    _envelope_checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.r0 < 0:
            raise ValueError("r0 must be nonnegative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.kind == "hardCore" and not isinf(self.alpha):
            object.__setattr__(self, "alpha", inf)
        if self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated potential needs a table")
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or tab.shape[0] < 2:
                raise ValueError("table must be a list of [r, w] pairs")
            if np.any(np.diff(tab[:, 0]) <= 0) or tab[0, 0] < 0:
                raise ValueError("table radii must be increasing and nonnegative")
            tab.setflags(write=False)
            object.__setattr__(self, "table", tab)
            self._check_envelope()

    @property
    def hard(self):
        return isinf(self.alpha)

    def _check_envelope(self):
        tab = self.table
        rmax = max(tab[-1, 0] * 2, 4 * max(self.r0, 1.0))
        r = np.union1d(np.linspace(0.0, rmax, 1000), tab[:, 0])
        r = r[r > 0]
        w = evaluate(self, r)
        bound = envelope(self, r)
        ok = (w <= bound * (1 + 1e-12) + 1e-12) | np.isinf(bound)
        if not np.all(ok):
            bad = r[~ok][0]
            raise ValueError(f"table is not dominated by its envelope at r={bad:.6g}")

    # -- serialization -------------------------------------------------
    def to_json(self):
        out = {"kind": self.kind, "kappa": self.kappa, "r0": self.r0,
               "alpha": "inf" if self.hard else self.alpha, "s": self.s}
        if self.table is not None:
            out["table"] = self.table.tolist()
        if self.kind == "hardCore" and not self.tail:
            out["tail"] = False
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(kind=obj["kind"], kappa=_parse_float(obj["kappa"]),
                   r0=_parse_float(obj.get("r0", 0.0)),
                   alpha=_parse_float(obj.get("alpha", "inf" if obj["kind"] == "hardCore" else 1.0)),
                   s=_parse_float(obj["s"]),
                   table=obj.get("table"), tail=bool(obj.get("tail", True)))

    def content_hash(self):
        import hashlib
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]


def load_potential(path):
    with open(path) as fh:
        return PotentialSpec.from_json(json.load(fh))


def power_law(kappa, r0, alpha, s):
    return PotentialSpec("powerLaw", kappa, r0, alpha, s)


def hard_core(kappa, r0, s, tail=True):
    return PotentialSpec("hardCore", kappa, r0, inf, s, tail=tail)


def core_part(w, r):
    """w1(r) = kappa (r0/r)^alpha on r < r0, +inf there for a hard core."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < w.r0
    if w.hard:
        out[inside] = inf
    else:
        with np.errstate(divide="ignore"):
            out[inside] = w.kappa * (w.r0 / r[inside]) ** w.alpha
    return out


def tail_part(w, r):
    """w2(r) = kappa / (1 + r^s)."""
    r = np.asarray(r, dtype=float)
    return w.kappa / (1.0 + r ** w.s)


def envelope(w, r):
    return core_part(w, r) + tail_part(w, r)


def envelope_parts(w):
    """Return the callables (w1, w2) with w <= w1 + w2."""
    return (lambda r: core_part(w, r)), (lambda r: tail_part(w, r))


def evaluate(w, r):
    """w(r) for scalar or array r >= 0; +inf inside a hard core."""
    scalar = np.ndim(r) == 0
    r = np.abs(np.atleast_1d(np.asarray(r, dtype=float)))
    if w.kind in ("envelope", "powerLaw"):
        out = envelope(w, r)
    elif w.kind == "hardCore":
        out = np.where(r < w.r0, inf, tail_part(w, r) if w.tail else 0.0)
    else:
        tab = w.table
        out = np.interp(r, tab[:, 0], tab[:, 1])
        # np.interp gives nan between an inf node and a finite one
        if np.any(np.isinf(tab[:, 1])):
            j = np.searchsorted(tab[:, 0], r, side="right")
            lo = np.clip(j - 1, 0, len(tab) - 1)
            hi = np.clip(j, 0, len(tab) - 1)
            inf_hit = np.isinf(tab[lo, 1]) | (np.isinf(tab[hi, 1]) & (r > tab[lo, 0]))
            out = np.where(inf_hit, inf, out)
    return float(out[0]) if scalar else out


def tail_l1_bound(w, d):
    """kappa |S^{d-1}| s / (d (s - d)), an upper bound on the integral of w2."""
    if w.s <= d:
        raise TailNotIntegrable(f"s={w.s} <= d={d}")
    return w.kappa * unit_sphere_area(d) * w.s / (d * (w.s - d))


def pair_energy(w, points):
    """Sum over pairs of w(|x_j - x_k|); +inf as soon as one pair is inf."""
    points = np.atleast_2d(points)
    n = points.shape[0]
    if n < 2:
        return 0.0
    iu = np.triu_indices(n, 1)
    diff = points[iu[0]] - points[iu[1]]
    vals = evaluate(w, np.sqrt(np.sum(diff * diff, axis=1)))
    if np.any(np.isinf(vals)):
        return inf
    return float(np.sum(vals))


def stability_falsify(w, N, trials, box, rng=None):
    """Random search for a configuration with energy below -kappa*N.

    ``box`` is a pair (lo, hi) of d-vectors.  Returns an (N, d) array or None.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    rng = np.random.default_rng(rng)
    lo = np.atleast_1d(np.asarray(box[0], dtype=float))
    hi = np.atleast_1d(np.asarray(box[1], dtype=float))
    for _ in range(int(trials)):
        x = rng.uniform(lo, hi, size=(N, lo.size))
        if pair_energy(w, x) < -w.kappa * N:
            return x
    return None
