"""Batch entry points for the verification runs.

Every subcommand validates its configuration, runs the corresponding module,
and emits JSON (nested reports) and CSV (tables), each carrying a
schema_version field. Reruns with the same flags and seed reproduce outputs
bit-identically. Exit codes: 0 success, 2 invalid configuration, 3 numerical
non-convergence (partial outputs are still written), 4 verification failure
(the failing row is identified in the JSON report).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .asymptotics import fit_exponent, run_sweep
from .barycenter_homology import (ChainComplexGF2, barycenter_complex,
                                  homology, triangulate_model)
from .bubbles import (BubbleSpec, Configuration, admissibility, residual_sup_ratio)
from .energy import (HarmonicTerm, PerturbedField, find_d_star,
                     interactions, select_parameters)
from .energy import _energy_config
from .manifold import QUOTIENT, SPHERE, QuadratureError, make_model
from .operators import gjms_constants

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_VERIFICATION = 4

_KINDS = {"sphere": SPHERE, "quotient": QUOTIENT}


@dataclass
class RunConfig:
    """Shared, validated run settings."""

    model_kind: str = "sphere"
    n: int = 5
    k: int = 1
    delta: float = 0.3
    mu_grid: tuple = ()
    d_range: tuple = ()
    rel_tol: float = 1e-7
    out_dir: str = "."
    seed: int = 0

    def validate(self):
        if self.model_kind not in _KINDS:
            raise ValueError(f"unknown model {self.model_kind!r}")
        if self.n <= 2 * self.k or self.k < 1:
            raise ValueError(f"need n > 2k >= 2, got n={self.n} k={self.k}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if any(m <= 0 for m in self.mu_grid):
            raise ValueError("mu values must be positive")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        return self


def _out_dir(args):
    out = args.out or os.environ.get("QCURV_OUT", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _emit_json(out_dir, name, payload):
    payload = dict(payload)
    payload["schema_version"] = SCHEMA_VERSION
    text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)
    with open(os.path.join(out_dir, name + ".json"), "w") as fh:
        fh.write(text + "\n")
    print(text)


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "__dict__"):
        return obj.__dict__
    raise TypeError(f"not serializable: {type(obj)}")


def _emit_csv(out_dir, name, header, rows):
    with open(os.path.join(out_dir, name + ".csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["schema_version", SCHEMA_VERSION])
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _two_bubble_config(model, constants, sep, mu1, mu2, delta,
                       w1=1.0, w2=1.0):
    e1 = np.zeros(model.ambient_dim)
    e1[0] = 1.0
    c2 = np.zeros(model.ambient_dim)
    c2[0], c2[1] = math.cos(sep), math.sin(sep)
    return Configuration(model=model, constants=constants, specs=(
        BubbleSpec(center=tuple(e1), mu=mu1, delta=delta, weight=w1),
        BubbleSpec(center=tuple(c2), mu=mu2, delta=delta, weight=w2)))


# ---------------------------------------------------------------------------
# Subcommands


def cmd_constants(args):
    cst = gjms_constants(args.n, args.k)
    payload = {
        "n": cst.n, "k": cst.k, "two_star": cst.two_star, "c": cst.c,
        "b": cst.b, "omega_n_minus_1": cst.omega_n_minus_1,
        "gamma_list": list(cst.gamma_list), "Y_sphere": cst.Y_sphere,
        "sobolev_constant": cst.sobolev_constant,
        "norm_2star": cst.norm_2star,
        "norm_2star_minus1": cst.norm_2star_minus1, "s": cst.s,
    }
    _emit_json(_out_dir(args), f"constants_n{args.n}_k{args.k}", payload)
    return EXIT_OK


def cmd_residual(args):
    cfg = RunConfig(model_kind=args.model, n=args.n, k=args.k,
                    delta=args.delta, mu_grid=(args.mu,)).validate()
    model = make_model(_KINDS[cfg.model_kind], cfg.n)
    cst = gjms_constants(cfg.n, cfg.k)
    center = np.zeros(model.ambient_dim)
    center[0] = 1.0
    spec = BubbleSpec(center=tuple(center), mu=args.mu, delta=args.delta)
    report = residual_sup_ratio(model, cst, spec, variant=args.variant)
    out = _out_dir(args)
    rows = [(float(r), float(v), float(b), float(abs(v) / b) if b > 0 else "")
            for r, v, b in zip(report["grid"], report["residual"],
                               report["bound"])]
    name = f"residual_{args.model}_n{cfg.n}_k{cfg.k}_mu{args.mu:g}"
    _emit_csv(out, name, ["r", "residual", "bound", "ratio"], rows)
    core_limit = 1e-6 * args.mu ** (-(cfg.n + 2 * cfg.k) / 2.0)
    payload = {
        "model": args.model, "n": cfg.n, "k": cfg.k, "mu": args.mu,
        "delta": args.delta, "variant": args.variant,
        "sup_ratio": report["sup_ratio"], "argmax_r": report["argmax_r"],
        "core_sup": report["core_sup"], "core_limit": core_limit,
        "admissibility": admissibility(cst, spec),
        "core_ok": bool(report["core_sup"] <= core_limit),
    }
    _emit_json(out, name, payload)
    if not payload["core_ok"]:
        print(f"verification failure: core residual {report['core_sup']:g} "
              f"exceeds {core_limit:g} (row r={report['argmax_r']:g})",
              file=sys.stderr)
        return EXIT_VERIFICATION
    return EXIT_OK


def cmd_interactions(args):
    cfg = RunConfig(model_kind=args.model, n=args.n, k=args.k,
                    delta=args.delta, mu_grid=(args.mu1, args.mu2),
                    rel_tol=args.rel_tol).validate()
    model = make_model(_KINDS[cfg.model_kind], cfg.n)
    cst = gjms_constants(cfg.n, cfg.k)
    config = _two_bubble_config(model, cst, args.sep, args.mu1, args.mu2,
                                args.delta)
    try:
        rep = interactions(config, rel_tol=cfg.rel_tol)
    except QuadratureError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    payload = {
        "model": args.model, "n": cfg.n, "k": cfg.k, "sep": args.sep,
        "mu": [args.mu1, args.mu2], "delta": args.delta,
        "eps": rep.eps, "Q": rep.Q, "L": rep.L,
        "self_interaction": rep.self_interaction,
        "nonlinear_gap": rep.nonlinear_gap, "q_over_eps": rep.q_over_eps,
        "l_vs_q": rep.l_vs_q, "l_symmetry_defect": rep.l_symmetry_defect,
        "quad_error": rep.quad_error,
    }
    _emit_json(_out_dir(args),
               f"interactions_{args.model}_n{cfg.n}_k{cfg.k}", payload)
    return EXIT_OK


_SWEEP_QUANTITIES = ("self-interaction", "nonlinear-gap", "energy-gap",
                     "q-over-eps", "residual-ratio")


def _sweep_measure(quantity, model, cst, args):
    def single(mu):
        center = np.zeros(model.ambient_dim)
        center[0] = 1.0
        return Configuration(model=model, constants=cst, specs=(
            BubbleSpec(center=tuple(center), mu=mu, delta=args.delta),))

    if quantity == "self-interaction":
        def measure(mu):
            rep = interactions(single(mu), rel_tol=args.rel_tol)
            return abs(float(rep.self_interaction[0])), rep.quad_error
    elif quantity == "nonlinear-gap":
        def measure(mu):
            rep = interactions(single(mu), rel_tol=args.rel_tol)
            return abs(float(rep.nonlinear_gap[0])), rep.quad_error
    elif quantity == "energy-gap":
        def measure(mu):
            rep = _energy_config(single(mu), rel_tol=args.rel_tol)
            return abs(rep.value - cst.Y_sphere), rep.quad_error
    elif quantity == "q-over-eps":
        def measure(mu):
            config = _two_bubble_config(model, cst, args.sep, mu, mu,
                                        args.delta)
            rep = interactions(config, rel_tol=args.rel_tol)
            return float(rep.q_over_eps[0, 1]), rep.quad_error
    elif quantity == "residual-ratio":
        def measure(mu):
            center = np.zeros(model.ambient_dim)
            center[0] = 1.0
            spec = BubbleSpec(center=tuple(center), mu=mu, delta=args.delta)
            rep = residual_sup_ratio(model, cst, spec)
            return rep["sup_ratio"], 0.0
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    return measure


def cmd_sweep(args):
    mu_grid = tuple(np.geomspace(args.mu_min, args.mu_max, args.points))
    cfg = RunConfig(model_kind=args.model, n=args.n, k=args.k,
                    delta=args.delta, mu_grid=mu_grid,
                    rel_tol=args.rel_tol).validate()
    if args.quantity not in _SWEEP_QUANTITIES:
        print(f"unknown quantity {args.quantity!r}", file=sys.stderr)
        return EXIT_CONFIG
    model = make_model(_KINDS[cfg.model_kind], cfg.n)
    cst = gjms_constants(cfg.n, cfg.k)
    measure = _sweep_measure(args.quantity, model, cst, args)
    sweep = run_sweep(args.quantity, measure, {}, "mu", mu_grid)
    out = _out_dir(args)
    name = f"sweep_{args.quantity}_{args.model}_n{cfg.n}_k{cfg.k}"
    _emit_csv(out, name,
              ["parameter", "value", "error_estimate", "quantity_id"],
              sweep.rows())
    payload = {
        "quantity": args.quantity, "model": args.model,
        "n": cfg.n, "k": cfg.k, "parameter": "mu",
        "values": list(sweep.values), "measured": list(sweep.measured),
        "errors": list(sweep.errors),
        "failures": [list(f) for f in sweep.failures],
    }
    fit_error = None
    try:
        fit = fit_exponent(sweep)
        payload["fit"] = {
            "slope": fit.slope, "intercept": fit.intercept,
            "r_squared": fit.r_squared, "window": list(fit.window),
            "log_factor": fit.log_factor,
            "bounded_ratio": fit.bounded_ratio, "bounded": fit.bounded,
        }
    except ValueError as exc:
        fit_error = str(exc)
        payload["fit"] = None
        payload["fit_error"] = fit_error
    _emit_json(out, name, payload)
    if sweep.failures:
        return EXIT_NONCONVERGED
    if fit_error:
        print(f"invalid configuration: {fit_error}", file=sys.stderr)
        return EXIT_CONFIG
    if args.expect_slope is not None:
        if abs(payload["fit"]["slope"] - args.expect_slope) > args.slope_tol:
            print(f"verification failure: slope {payload['fit']['slope']:g} "
                  f"not within {args.slope_tol:g} of {args.expect_slope:g}",
                  file=sys.stderr)
            return EXIT_VERIFICATION
    return EXIT_OK


def cmd_energy_scan(args):
    lo, hi = (int(p) for p in args.d.split(".."))
    mu_grid = tuple(np.geomspace(args.mu_min, args.mu_max, args.points))
    cfg = RunConfig(model_kind=args.model, n=args.n, k=args.k,
                    delta=args.delta, mu_grid=mu_grid,
                    d_range=tuple(range(lo, hi + 1)),
                    rel_tol=args.rel_tol).validate()
    model = make_model(_KINDS[cfg.model_kind], cfg.n)
    cst = gjms_constants(cfg.n, cfg.k)
    rows, d_star, failed = [], None, None
    try:
        result = find_d_star(model, cst, cfg.d_range, mu_grid=mu_grid,
                             delta=cfg.delta, rel_tol=cfg.rel_tol)
        rows, d_star = result["rows"], result["d_star"]
    except QuadratureError as exc:
        failed = str(exc)
    out = _out_dir(args)
    name = f"energy_scan_{args.model}_n{cfg.n}_k{cfg.k}"
    _emit_csv(out, name,
              ["d", "mu", "value", "margin_strict", "margin_loss",
               "quad_error", "strict"],
              [(r["d"], r["mu"], r["value"], r["margin_strict"],
                r["margin_loss"], r["quad_error"], int(r["strict"]))
               for r in rows])
    _emit_json(out, name, {"rows": rows, "d_star": d_star,
                           "failure": failed})
    if failed is not None:
        print(f"non-convergence: {failed}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _load_field(path, model, cst):
    """Deserialized field: bubble configuration plus optional degree-one
    perturbations, from a JSON document."""
    with open(path) as fh:
        doc = json.load(fh)
    specs = tuple(
        BubbleSpec(center=tuple(s["center"]), mu=float(s["mu"]),
                   delta=float(s.get("delta", 0.3)),
                   weight=float(s.get("weight", 1.0)))
        for s in doc["specs"])
    config = Configuration(model=model, constants=cst, specs=specs)
    harmonics = tuple(
        HarmonicTerm(coef=float(h["coef"]),
                     vector=tuple(float(v) for v in h["vector"]))
        for h in doc.get("harmonics", ()))
    if harmonics:
        return PerturbedField(config=config, harmonics=harmonics)
    return config


def cmd_select(args):
    cfg = RunConfig(model_kind=args.model, n=args.n, k=args.k,
                    delta=args.delta).validate()
    model = make_model(_KINDS[cfg.model_kind], cfg.n)
    cst = gjms_constants(cfg.n, cfg.k)
    try:
        target = _load_field(args.field, model, cst)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"invalid field file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    res = select_parameters(target, args.d, model, cst, delta=cfg.delta,
                            restarts=args.restarts, budget=args.budget,
                            seed=args.seed)
    payload = {
        "d": args.d, "model": args.model, "n": cfg.n, "k": cfg.k,
        "weights": list(res.weights),
        "centers": [list(c) for c in res.centers],
        "scales": list(res.scales), "distance": res.distance,
        "eps_sum": res.eps_sum, "in_neighborhood": res.in_neighborhood,
        "converged": res.converged, "degenerate": res.degenerate,
        "n_evaluations": res.n_evaluations, "seed": args.seed,
    }
    _emit_json(_out_dir(args), f"select_{args.model}_d{args.d}", payload)
    if not res.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_homology(args):
    if args.model not in ("circle", "sphere2", "point"):
        print(f"unknown model {args.model!r}", file=sys.stderr)
        return EXIT_CONFIG
    if args.d not in (1, 2):
        print("d must be 1 or 2", file=sys.stderr)
        return EXIT_CONFIG
    try:
        complex_m = triangulate_model(args.model, args.resolution)
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    pair = barycenter_complex(complex_m, args.d)
    ambient_cc = ChainComplexGF2(
        [[frozenset(s) for s in lev] for lev in pair.ambient.simplices])
    dd_ok = ambient_cc.check_dd_zero()
    betti = homology(pair)
    payload = {
        "model": args.model, "d": args.d, "resolution": args.resolution,
        "betti": list(betti),
        "simplex_counts": [len(l) for l in pair.ambient.simplices],
        "euler_characteristic": pair.ambient.euler_characteristic(),
        "dd_zero": bool(dd_ok),
    }
    rows = [(i, b) for i, b in enumerate(betti)]
    if pair.sub is not None:
        payload["betti_sub"] = list(homology(pair.sub))
        payload["betti_relative"] = list(homology(pair, relative=True))
    out = _out_dir(args)
    name = f"homology_{args.model}_d{args.d}"
    _emit_csv(out, name, ["dimension", "betti"], rows)
    _emit_json(out, name, payload)
    if not dd_ok:
        print("verification failure: boundary of boundary is nonzero "
              "on the ambient complex", file=sys.stderr)
        return EXIT_VERIFICATION
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(p):
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--model", default="sphere",
                   choices=("sphere", "quotient"))
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--rel-tol", type=float, default=1e-7)
    p.add_argument("--out", default=None,
                   help="output directory (default $QCURV_OUT or .)")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qcurv",
        description="Desk-scale verification runs for the bubble calculus")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("constants", help="scalar constants for (n, k)")
    _add_common(p)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("residual", help="pointwise residual vs bound table")
    _add_common(p)
    p.add_argument("--mu", type=float, default=1e-2)
    p.add_argument("--variant", default="lcf", choices=("lcf", "general"))
    p.set_defaults(func=cmd_residual)

    p = sub.add_parser("interactions", help="two-bubble interaction report")
    _add_common(p)
    p.add_argument("--sep", type=float, default=0.3,
                   help="geodesic separation of the two centers")
    p.add_argument("--mu1", type=float, default=1e-2)
    p.add_argument("--mu2", type=float, default=1e-2)
    p.set_defaults(func=cmd_interactions)

    p = sub.add_parser("sweep", help="parameter sweep plus exponent fit")
    _add_common(p)
    p.add_argument("--quantity", required=True, choices=_SWEEP_QUANTITIES)
    p.add_argument("--mu-min", type=float, default=1e-3)
    p.add_argument("--mu-max", type=float, default=1e-1)
    p.add_argument("--points", type=int, default=9)
    p.add_argument("--sep", type=float, default=0.3)
    p.add_argument("--expect-slope", type=float, default=None)
    p.add_argument("--slope-tol", type=float, default=0.15)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("energy-scan", help="sum-energy margins and d*")
    _add_common(p)
    p.add_argument("--d", default="2..5", help="range, e.g. 2..6")
    p.add_argument("--mu-min", type=float, default=1e-2)
    p.add_argument("--mu-max", type=float, default=3e-2)
    p.add_argument("--points", type=int, default=3)
    p.set_defaults(func=cmd_energy_scan)

    p = sub.add_parser("select", help="best d-bubble approximation")
    _add_common(p)
    p.add_argument("--field", required=True,
                   help="JSON field description (specs + harmonics)")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--budget", type=int, default=2000)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("homology", help="Betti tables of barycenter spaces")
    p.add_argument("--model", default="circle")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--resolution", type=int, default=4)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_homology)

    return parser


def run_command(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
