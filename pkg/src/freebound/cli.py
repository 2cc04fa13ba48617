"""Command-line front end.

Exit status is 0 on success, 2 when nothing applicable could be reported,
and 1 on errors (including usage errors).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import bounds as B
from . import constructions as C
from . import covering, oracle, states, suites
from .density import load_density, mass
from .errors import FreeboundError, NotApplicable
from .potential import load_potential

EXIT_OK, EXIT_ERROR, EXIT_NA = 0, 1, 2
CONSTRUCTIONS = ("trial_1d", "monge_1d", "gc_besicovitch", "ot_small", "block_ot",
                 "floating_crystal")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def clean(obj):
    """Round floats to 12 significant digits and map non-finite values to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.12g}")
    return obj


def dumps(obj):
    return json.dumps(clean(obj), indent=2, sort_keys=False) + "\n"


def _fmt(x):
    c = clean(x)
    return c if isinstance(c, str) else repr(c)


def _emit(args, payload, rows=None):
    text = dumps(payload)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.csv and rows is not None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
        with open(args.csv, "w") as fh:
            fh.write(buf.getvalue())


def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required for '{args.command}'")


def _constants(args):
    if not args.constants:
        return {}
    text = args.constants
    if not text.lstrip().startswith("{"):
        with open(text) as fh:
            text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--constants is not valid JSON: {exc}") from exc


def _packing(consts):
    if "rho_c" not in consts:
        return B.PackingConstants()
    table = dict(B.PackingConstants().values)
    table.update({int(k): float(v) for k, v in consts["rho_c"].items()})
    return B.PackingConstants(tuple(sorted(table.items())))


# -- commands ---------------------------------------------------------------------

def cmd_bounds(args):
    _need(args, "density", "potential")
    rho, w = load_density(args.density), load_potential(args.potential)
    consts = _constants(args)
    ens = B.ensemble_name(args.ensemble)
    reports, skipped = B.all_bounds(rho, w, args.T, ens)
    eta = consts.get("eta", args.eta)
    if eta is not None and ens == B.CANONICAL and args.T == 0:
        reports = [r for r in reports if r.name != "canonical_T0_upper"]
        try:
            reports.append(B.canonical_T0_upper(rho, w, eta, consts.get("C")))
        except NotApplicable as exc:
            skipped["canonical_T0_upper"] = str(exc)
    if args.epsilon is not None and ens == B.CANONICAL and args.T > 0:
        reports = [r for r in reports if r.name != "ot_block_upper"]
        try:
            reports.append(B.ot_block_upper(rho, w, args.T, args.epsilon))
        except NotApplicable as exc:
            skipped["ot_block_upper"] = str(exc)
    payload = [r.to_json() for r in reports]
    rows = [("name", "kind", "value", "exact")] + [(r.name, r.kind, r.value, r.exact)
                                                    for r in reports]
    _emit(args, payload, rows)
    for name, why in skipped.items():
        print(f"skipped {name}: {why}", file=sys.stderr)
    return EXIT_OK if any(r.kind != "lower" for r in reports) else EXIT_NA


def _construct(name, rho, w, args, consts):
    eps = args.epsilon
    if name == "trial_1d":
        return C.trial_1d(rho)
    if name == "monge_1d":
        return C.monge_state_1d(rho, None if args.tsamples == 0 else args.tsamples)
    if name == "gc_besicovitch":
        cover = covering.besicovitch_cubes(rho) if mass(rho) > 1 else None
        return C.gc_besicovitch_trial(rho, cover)
    if name == "ot_small":
        rule = "fixed" if args.delta is not None else "R"
        return C.ot_state_small(rho, w, rule, args.delta)
    if name == "block_ot":
        return C.block_ot_trial(rho, w, 0.05 if eps is None else eps)
    if name == "floating_crystal":
        if eps is None:
            raise UsageError("--epsilon is required for floating_crystal")
        return C.floating_crystal_localized(rho, w, eps, _packing(consts))
    raise UsageError(f"unknown construction {name!r}")


def cmd_construct(args):
    _need(args, "density", "construction")
    rho = load_density(args.density)
    w = load_potential(args.potential) if args.potential else None
    if args.construction in ("ot_small", "block_ot", "floating_crystal") and w is None \
            and not (args.construction == "ot_small" and args.delta is not None):
        raise UsageError(f"--potential is required for {args.construction}")
    P = _construct(args.construction, rho, w, args, _constants(args))
    got = states.density_of(P)
    err = float(np.max(np.abs(got.values - rho.values)))
    payload = {"construction": args.construction, "particles": states.particle_number(P),
               "densityError": err}
    if w is not None:
        mode = "concave" if isinstance(P, states.SiteMixture) and len(P.families) > 1 else "exact"
        try:
            payload["energy"] = states.interaction_energy(P, w)
            payload["entropy"] = states.entropy(P, mode)
            payload["freeEnergy"] = states.free_energy(P, w, args.T, mode)
            payload["entropyMode"] = mode
        except FreeboundError as exc:
            payload["evaluationError"] = str(exc)
    if args.dump:
        payload["state"] = states.state_to_json(P)
    rows = [("construction", "densityError", "freeEnergy"),
            (args.construction, err, payload.get("freeEnergy", float("nan")))]
    _emit(args, payload, rows)
    return EXIT_OK


def cmd_oracle(args):
    _need(args, "density", "potential")
    rho, w = load_density(args.density), load_potential(args.potential)
    ens = B.ensemble_name(args.ensemble)
    if ens == B.CANONICAL:
        res = oracle.exact_canonical(rho, w, args.T)
    else:
        res = oracle.exact_grand_canonical(rho, w, args.T, args.nmax)
    _emit(args, res.to_json(), [("ensemble", "method", "value"), (ens, res.method, res.value)])
    return EXIT_OK


def cmd_verify(args):
    if args.suite:
        cases = suites.suite(args.suite, args.count)
    else:
        _need(args, "density", "potential")
        cases = [("input", load_density(args.density), load_potential(args.potential),
                  args.T, args.ensemble)]
    results, rows = [], [("case", "ok", "minSlack", "construction", "bound")]
    for i, (label, rho, w, T, ens) in enumerate(cases):
        try:
            rep = oracle.verify_sandwich(rho, w, T, ens)
        except FreeboundError as exc:
            rep = {"ok": False, "links": [], "error": f"{type(exc).__name__}: {exc}"}
        rep = dict(rep, case=f"{label}#{i}")
        slacks = [l["slack"] for l in rep["links"]]
        rows.append((rep["case"], rep["ok"], min(slacks) if slacks else float("nan"),
                     rep.get("construction"), rep.get("bound")))
        results.append(rep)
    ok = all(r["ok"] for r in results)
    _emit(args, {"ok": ok, "cases": results}, rows)
    return EXIT_OK if ok else EXIT_ERROR


def cmd_percus(args):
    _need(args, "density", "r0")
    rho = load_density(args.density)
    rep = B.percus_exact_1d(rho, args.r0, args.T)
    _emit(args, rep.to_json(), [("name", "value", "exact"), (rep.name, rep.value, rep.exact)])
    return EXIT_OK


def cmd_cover(args):
    _need(args, "density")
    rho = load_density(args.density)
    if args.epsilon is not None:
        cov = covering.besicovitch_balls(rho, args.epsilon)
        rows = [("center", "radius")] + [(" ".join(map(_fmt, c)), r)
                                         for c, r in zip(cov.centers, cov.radii)]
    else:
        cov = covering.besicovitch_cubes(rho)
        rows = [("center", "side", "family")] + [
            (" ".join(map(_fmt, c)), l, int(k))
            for c, l, k in zip(cov.centers, cov.sides, cov.families)]
    _emit(args, cov.to_json(), rows)
    return EXIT_OK


def cmd_represent(args):
    _need(args, "density", "r0")
    rho = load_density(args.density)
    flags = B.representability(rho, args.r0)
    rows = [tuple(flags), tuple(flags.values())]
    _emit(args, flags, rows)
    return EXIT_OK


COMMANDS = {"bounds": cmd_bounds, "construct": cmd_construct, "oracle": cmd_oracle,
            "verify": cmd_verify, "percus": cmd_percus, "cover": cmd_cover,
            "represent": cmd_represent}


def build_parser():
    p = _Parser(prog="freebound", description="Classical DFT free-energy bounds.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--density")
        s.add_argument("--potential")
        s.add_argument("--T", type=float, default=0.0)
        s.add_argument("--ensemble", default="canonical", choices=["canonical", "gc"])
        s.add_argument("--epsilon", type=float)
        s.add_argument("--eta", type=float)
        s.add_argument("--nmax", type=int)
        s.add_argument("--r0", type=float)
        s.add_argument("--out")
        s.add_argument("--csv")
        s.add_argument("--constants")
        if name == "construct":
            s.add_argument("--construction", choices=CONSTRUCTIONS)
            s.add_argument("--tsamples", type=int, default=256,
                           help="Monge t-samples; 0 integrates exactly")
            s.add_argument("--delta", type=float, help="fixed separation for ot_small")
            s.add_argument("--dump", action="store_true", help="include the state itself")
        if name == "verify":
            s.add_argument("--suite", choices=suites.SUITES)
            s.add_argument("--count", type=int, default=20)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        if args.T < 0:
            raise UsageError("--T must be nonnegative")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except NotApplicable as exc:
        print(f"not applicable: {exc}", file=sys.stderr)
        return EXIT_NA
    except (FreeboundError, OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
