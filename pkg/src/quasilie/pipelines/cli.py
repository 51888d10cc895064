"""Command line: ``python3 -m quasilie <verb> [options]``.

Exit codes: 0 all checks pass, 1 a check fails, 2 usage or configuration
error, 3 numeric breakdown (blow-up, pole, singular flow, domain error).
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from .. import expr as ex
from ..fields import BlowUpError, FieldError, zcc_report
from ..flows import SingularFlowError, autonomisation_check, star_action
from ..invariants import InvariantError, gcc_check, invariant_table
from ..schemes import SchemeError, membership, time_grid, verify_scheme
from ..superposition import LambdaFitError, PoleError, SuperpositionError, rule_by_name, verify_rule
from .abel import PipelineError, gcc_family, solve_generalised_abel
from .config import ConfigError, build_basis, build_field, build_flow, build_grid, build_path, load_config
from .report import Report, config_hash, fmt_float
from .scenarios import list_scenarios, run_scenario

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _config(args) -> dict:
    if not args.config:
        raise UsageError(f"'{args.verb}' needs --config")
    return load_config(args.config)


def _emit(args, text: str):
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _verdict(rep: Report):
    sys.stderr.write(f"{rep.scenario}: {'PASS' if rep.passed else 'FAIL'}\n")


def _finish(args, rep: Report, cfg=None) -> int:
    if cfg is not None:
        rep.provenance.setdefault("config_hash", config_hash(cfg))
    rep.provenance.setdefault("seed", args.seed)
    if args.steps is not None:
        rep.provenance.setdefault("steps", args.steps)
    _emit(args, rep.to_json() if args.format == "json" else rep.to_csv())
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _default_grid(cfg, F, count=9):
    box = [[0.0, 1.0]] * F.s + [[-1.0, 1.0]] * F.n
    return build_grid(cfg, box, [count] * (F.s + F.n))


# ---------------------------------------------------------------------------
# verbs


def cmd_zcc(args) -> int:
    cfg = _config(args)
    F = build_field(cfg)
    tol = args.tol if args.tol is not None else 1e-8
    rr = zcc_report(F, _default_grid(cfg, F), tol)
    if args.format == "csv":
        _emit(args, rr.to_csv())
        rep = Report("zcc")
        rep.add("zcc", rr.max_norm, tol)
        _verdict(rep)
        return EXIT_PASS if rep.passed else EXIT_FAIL
    rep = Report("zcc", data={"residuals": rr.to_dict()})
    rep.add("zcc", rr.max_norm, tol)
    return _finish(args, rep, cfg)


def _symbolic_bracket(A, B, sv):
    """[A, B]^i = A^j d_j B^i - B^j d_j A^i."""
    out = []
    for i in range(len(sv)):
        acc = ex.Num(0.0)
        for j, v in enumerate(sv):
            acc = ex.add(acc, ex.sub(ex.mul(A[j], ex.differentiate(B[i], v)),
                                     ex.mul(B[j], ex.differentiate(A[i], v))))
        out.append(acc)
    return out


def cmd_bracket(args) -> int:
    cfg = _config(args)
    V = build_basis(cfg)
    tol = args.tol if args.tol is not None else 1e-8
    rep = Report("bracket")
    worst = 0.0
    table = []
    for i in range(V.r):
        for j in range(i + 1, V.r):
            br = _symbolic_bracket(V.fields[i], V.fields[j], V.state_vars)
            coef, res = V.fit(V.bracket_values(i, j))
            worst = max(worst, res)
            table.append({"i": i + 1, "j": j + 1, "bracket": [ex.to_string(e) for e in br],
                          "coefficients": [float(c) for c in coef], "residual": res})
    rep.add("closure", worst, tol)
    rep.data["brackets"] = table
    return _finish(args, rep, cfg)


def cmd_transform(args) -> int:
    cfg = _config(args)
    F = build_field(cfg)
    h = build_flow(cfg, F.time_vars, F.state_vars)
    tol = args.tol if args.tol is not None else 1e-6
    G = star_action(h, F)
    rng = np.random.default_rng(args.seed)
    grid = _default_grid(cfg, F, 3)
    box = grid.box
    samples = [(rng.uniform([b[0] for b in box[:F.s]], [b[1] for b in box[:F.s]]),
                rng.uniform([b[0] for b in box[F.s:]], [b[1] for b in box[F.s:]])) for _ in range(10)]
    rep = Report("transform")
    rep.add("autonomisation", autonomisation_check(h, F, samples, G), tol)
    if hasattr(G, "components"):
        rep.data["transformed"] = [[ex.to_string(c) for c in row] for row in G.components]
    return _finish(args, rep, cfg)


def cmd_membership(args) -> int:
    cfg = _config(args)
    F = build_field(cfg)
    V = build_basis(cfg, F.state_vars)
    tol = args.tol if args.tol is not None else 1e-8
    g = cfg.get("grid", {})
    box = g.get("box", [[0.0, 1.0]] * F.s)[:F.s]
    count = int((g.get("resolution") or [5])[0])
    mem = membership(F, V, time_grid(box, count), tol)
    rep = Report("membership", data={"membership": mem.to_dict()})
    rep.add("membership", mem.worst, tol)
    return _finish(args, rep, cfg)


def cmd_scheme_verify(args) -> int:
    cfg = _config(args)
    V = build_basis(cfg)
    W = cfg.get("scheme", {}).get("w_indices")
    if W is None:
        raise ConfigError("missing key 'scheme.w_indices'")
    tol = args.tol if args.tol is not None else 1e-8
    sr = verify_scheme(V, [int(i) for i in W], tol)
    rep = Report("scheme-verify")
    for k, v in sr.residuals.items():
        rep.add(k, v, tol)
    return _finish(args, rep, cfg)


def cmd_superpose(args) -> int:
    cfg = _config(args)
    F = build_field(cfg)
    sp = cfg.get("superpose", {})
    rule = rule_by_name(sp.get("rule", "riccati"), F.n)
    initial = sp.get("initial")
    if not initial:
        raise ConfigError("missing key 'superpose.initial'")
    tol = args.tol if args.tol is not None else 1e-6
    path = build_path(cfg, args.steps)
    box = cfg.get("grid", {}).get("box", [[0.0, 1.0]] * F.s)[:F.s]
    rr = verify_rule(rule, F, initial, path=path, box=box, tol=tol, steps=args.steps)
    rep = Report("superpose", data={"rule": rr.to_dict()})
    rep.add("rule_deviation", rr.deviation, tol)
    return _finish(args, rep, cfg)


def _abel_section(cfg):
    ab = cfg.get("abel")
    if ab is None:
        raise ConfigError("missing key 'abel'")
    if "family" in ab:
        fam = ab["family"]
        coeffs = gcc_family(float(fam.get("k1", 0.5)), float(fam.get("k2", 0.7)), float(fam.get("f0", 1.0)))
        eps = 3.0
    else:
        coeffs = ab.get("coefficients")
        if not coeffs or len(coeffs) != 4:
            raise ConfigError("'abel.coefficients' must list a, c, f, g")
        eps = float(ab.get("eps", 3.0))
    for k, c in enumerate(coeffs):
        try:
            ex.as_expr(c)
        except ex.ExprSyntaxError as err:
            raise ConfigError(f"abel coefficient {k}: cannot parse {err.source!r} (offset {err.offset})") from None
    return ab, tuple(coeffs), eps


def cmd_invariants(args) -> int:
    cfg = _config(args)
    ab, coeffs, eps = _abel_section(cfg)
    t0, t1 = map(float, ab.get("interval", [0.0, 1.0]))
    tgrid = np.linspace(t0, t1, int(ab.get("points", 11)))
    tol = args.tol if args.tol is not None else 1e-8
    params = {k: float(v) for k, v in cfg.get("parameters", {}).items()}
    rows = invariant_table(coeffs, eps, tgrid, ab.get("tvar", "t"), params)
    res = gcc_check(coeffs, eps, tgrid, tol, ab.get("tvar", "t"), params)
    rep = Report("invariants", data={"gcc": res.to_dict()})
    rep.add("gcc_drift", res.drift, tol)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "F1", "F2", "F3"])
        for r in rows:
            w.writerow([fmt_float(v) for v in r])
        _emit(args, buf.getvalue())
        sys.stderr.write(rep.to_json())
        return EXIT_PASS if rep.passed else EXIT_FAIL
    rep.data["table"] = [list(r) for r in rows]
    return _finish(args, rep, cfg)


def cmd_solve_abel(args) -> int:
    cfg = _config(args)
    ab, coeffs, eps = _abel_section(cfg)
    steps = args.steps or int(ab.get("steps", 1000))
    params = {k: float(v) for k, v in cfg.get("parameters", {}).items()}
    traj, rep = solve_generalised_abel(coeffs, eps, float(ab.get("x0", 0.2)),
                                       tuple(map(float, ab.get("interval", [0.0, 1.0]))), steps,
                                       ab.get("tvar", "t"), params,
                                       tol=args.tol if args.tol is not None else 1e-5)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x"])
        for t, x in zip(traj.times[:, 0], traj.states[:, 0]):
            w.writerow([fmt_float(t), fmt_float(x)])
        _emit(args, buf.getvalue())
        _verdict(rep)
        return EXIT_PASS if rep.passed else EXIT_FAIL
    return _finish(args, rep, cfg)


def cmd_scenario(args) -> int:
    if args.action == "list":
        _emit(args, "".join(f"{n}\t{d}\n" for n, d in list_scenarios()))
        return EXIT_PASS
    if not args.name:
        raise UsageError("scenario run needs a scenario name")
    cfg = load_config(args.config) if args.config else None
    rep = run_scenario(args.name, cfg, seed=args.seed, tol=args.tol, steps=args.steps)
    _emit(args, rep.to_json() if args.format == "json" else rep.to_csv())
    return EXIT_PASS if rep.passed else EXIT_FAIL


VERBS = {
    "zcc": (cmd_zcc, "zero curvature report of a configured field"),
    "bracket": (cmd_bracket, "pairwise Lie brackets of a configured basis and their closure"),
    "transform": (cmd_transform, "star action of a configured flow on a configured field"),
    "membership": (cmd_membership, "decompose a configured field over a configured basis"),
    "scheme-verify": (cmd_scheme_verify, "check the quasi-Lie scheme axioms"),
    "superpose": (cmd_superpose, "verify a superposition rule on integrated solutions"),
    "invariants": (cmd_invariants, "F1, F2, F3 tables and the constancy verdict"),
    "solve-abel": (cmd_solve_abel, "solve a generalised Abel equation by reduction"),
    "scenario": (cmd_scenario, "run or list shipped scenarios"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--tol", type=float, help="tolerance override")
    common.add_argument("--steps", type=int, help="integration steps per segment")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized sampling")
    parser = argparse.ArgumentParser(prog="quasilie", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    for name, (_, help_) in VERBS.items():
        p = sub.add_parser(name, parents=[common], help=help_)
        if name == "scenario":
            p.add_argument("action", choices=("run", "list"))
            p.add_argument("name", nargs="?")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_PASS if err.code == 0 else EXIT_USAGE
    try:
        return VERBS[args.verb][0](args)
    except (ConfigError, UsageError, ex.ExprSyntaxError, ex.UnboundVariable) as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_USAGE
    except (BlowUpError, PoleError, SingularFlowError, ex.DomainError, LambdaFitError, FloatingPointError) as err:
        sys.stderr.write(f"numeric breakdown: {err}\n")
        return EXIT_NUMERIC
    except PipelineError as err:
        sys.stderr.write(f"check failed: {err}\n")
        return EXIT_FAIL
    except (SchemeError, SuperpositionError, InvariantError, FieldError) as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_USAGE


__all__ = ["EXIT_FAIL", "EXIT_NUMERIC", "EXIT_PASS", "EXIT_USAGE", "build_parser", "main"]
