"""Command-line entry point.

Exit status: 0 on success, 1 when a verification check fails, 2 on usage
errors (argparse's own convention).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict

import numpy as np

from . import divergence, fano, harness, verify
from .graphs import EnsembleKind, EnsembleSpec, Graph, build_ensemble, clique_union, log_cardinality
from .models import IsingParams

NATS_PER_BIT = math.log(2)


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _spec_from_args(args) -> EnsembleSpec:
    sizes = tuple(_ints(args.sizes)) if args.sizes else None
    p = args.p if args.p is not None else (sum(sizes) if sizes else None)
    if p is None:
        raise ValueError("--p is required")
    return EnsembleSpec(EnsembleKind(args.kind), p, m=args.m, d=args.d, sizes=sizes)


def _add_spec_args(ap):
    ap.add_argument("--kind", required=True, choices=[k.value for k in EnsembleKind])
    ap.add_argument("--p", type=int)
    ap.add_argument("--m", type=int)
    ap.add_argument("--d", type=int)
    ap.add_argument("--sizes", help="comma-separated clique sizes")


def _emit(obj, args) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _scale(x, bits):
    if x is None:
        return None
    return x / NATS_PER_BIT if bits else x


def cmd_bounds(args) -> int:
    out = []
    if args.ensemble2a:
        out.append(fano.ensemble2a_bound(_ints(args.ensemble2a), _floats(args.lam)[0], args.delta).to_json())
    elif args.ensemble4a:
        out.append(fano.ensemble4a_bound(_ints(args.ensemble4a), _floats(args.tau)[0], args.alpha, args.delta).to_json())
    else:
        for p in _ints(args.p):
            for d in _ints(args.d):
                if args.model == "ising":
                    for lam in _floats(args.lam):
                        out.append(fano.theorem_ising_bound(p, d, lam, args.delta).to_json())
                else:
                    for tau in _floats(args.tau):
                        out.append(fano.theorem_gaussian_bound(p, d, tau, args.delta).to_json())
    _emit(out, args)
    return 0


def cmd_cardinality(args) -> int:
    spec = _spec_from_args(args)
    card = log_cardinality(spec, args.alpha)
    unit = "bits" if args.bits else "nats"
    obj = {k: _scale(v, args.bits) for k, v in asdict(card).items()}
    obj["unit"] = unit
    obj["spec"] = spec.to_json()
    if args.enumerate:
        fam = build_ensemble(spec, "enumerate", ceiling=args.ceiling)
        obj["enumerated_count"] = len(fam)
        if args.list:
            obj["graphs"] = [g.to_json() for g in fam]
    _emit(obj, args)
    return 0


def cmd_divergence(args) -> int:
    op = args.op
    if op == "edge-ising":
        r = divergence.edge_divergence_ising(args.lam)
        obj = {"exact": r.exact, "paper_bound": r.paper_bound}
    elif op == "edge-gaussian":
        t = args.tau
        sigma1 = np.linalg.inv([[1, -t], [-t, 1]])
        # the closed form is D(P0 || P1), and also D(P1 || Q) for Q = N(0, I / (1 - t^2))
        obj = {
            "closed_form": fano.gaussian_edge_divergence(t),
            "empty_vs_edge": divergence.kl_gaussian(np.eye(2), sigma1),
            "edge_vs_empty": divergence.kl_gaussian(sigma1, np.eye(2)),
            "edge_vs_scaled_empty": divergence.kl_gaussian(sigma1, np.eye(2) / (1 - t * t)),
        }
    elif op == "clique-partial":
        obj = {"value": divergence.clique_partial_divergence(args.m, args.mt, args.a)}
    elif op == "worst-case":
        r = divergence.worst_case_partial_divergence(_spec_from_args(args), args.a, args.nz)
        obj = {"exact_max": r.exact_max, "paper_bound": r.paper_bound, "allocation": list(r.allocation),
               "greedy_value": r.greedy_value, "relaxed_max": r.relaxed_max}
    elif op == "clique-minus-one":
        d = args.d
        base = clique_union([range(d + 1)], d + 1)
        removed = Graph(d + 1, tuple(e for e in base.edges if e != (0, 1)))
        r = divergence.clique_minus_one_divergence(removed, base, args.lam)
        obj = {"exact": r.exact, "paper_bound": r.paper_bound, "bound_valid": r.bound_valid}
    else:
        obj = {"value": divergence.f_beta(args.beta)}
        _emit(obj, args)
        return 0
    obj = {k: (_scale(v, args.bits) if isinstance(v, float) else v) for k, v in obj.items()}
    obj["unit"] = "bits" if args.bits else "nats"
    _emit(obj, args)
    return 0


def cmd_mi(args) -> int:
    spec = _spec_from_args(args)
    z = _ints(args.z)
    params = IsingParams(args.lam)
    obj = {
        "mi": _scale(fano.exact_conditional_mi(spec, params, z), args.bits),
        "capacity": _scale(fano.channel_capacity(spec, params, z), args.bits),
        "unit": "bits" if args.bits else "nats",
    }
    _emit(obj, args)
    return 0


def cmd_simulate(args) -> int:
    config, opts = harness.load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if overrides:
        config = harness.ExperimentConfig.from_json({**config.to_json(), **overrides})
    fmt = args.format or opts.get("format", "csv")
    out = args.out or opts.get("output")
    table = harness.run_experiment(config, workers=args.workers)
    text = harness.emit_report(table, fmt, out, bits=args.bits)
    if out is None:
        sys.stdout.write(text)
    return 0


def cmd_verify(args) -> int:
    results = verify.verify_invariants(args.scope)
    report = verify.format_report(results)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report)
    sys.stdout.write(report)
    return 0 if all(r.passed for r in results) else 1


def cmd_report(args) -> int:
    table = harness.load_table(args.input)
    text = harness.emit_report(table, args.format, args.out, bits=args.bits)
    if args.out is None:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="activegms", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--bits", action="store_true", help="display information quantities in bits")

    b = sub.add_parser("bounds", parents=[common], help="evaluate the sample-complexity lower bounds")
    b.add_argument("--model", choices=["ising", "gaussian"], default="ising")
    b.add_argument("--p", default="100", help="node counts, comma-separated")
    b.add_argument("--d", default="4", help="degree bounds, comma-separated")
    b.add_argument("--lam", default="1.0")
    b.add_argument("--tau", default="0.5")
    b.add_argument("--delta", type=float, default=0.1)
    b.add_argument("--alpha", type=float, default=0.5)
    b.add_argument("--ensemble2a", help="clique sizes for the variable clique-minus-one bound")
    b.add_argument("--ensemble4a", help="clique sizes for the variable disjoint-clique bound")
    b.set_defaults(func=cmd_bounds)

    c = sub.add_parser("cardinality", parents=[common], help="ensemble sizes")
    _add_spec_args(c)
    c.add_argument("--alpha", type=float, default=1.0)
    c.add_argument("--enumerate", action="store_true")
    c.add_argument("--list", action="store_true", help="with --enumerate, print every graph")
    c.add_argument("--ceiling", type=int, default=10**7)
    c.set_defaults(func=cmd_cardinality)

    dv = sub.add_parser("divergence", parents=[common], help="divergences and divergence bounds")
    dv.add_argument("op", choices=["edge-ising", "edge-gaussian", "clique-partial", "worst-case", "clique-minus-one", "f-beta"])
    dv.add_argument("--lam", type=float, default=1.0)
    dv.add_argument("--tau", type=float, default=0.5)
    dv.add_argument("--kind", default=EnsembleKind.DISJOINT_CLIQUES.value, choices=[k.value for k in EnsembleKind])
    dv.add_argument("--p", type=int)
    dv.add_argument("--m", type=int)
    dv.add_argument("--mt", type=int)
    dv.add_argument("--d", type=int)
    dv.add_argument("--sizes")
    dv.add_argument("--a", type=float, default=1.0)
    dv.add_argument("--nz", type=int, default=0)
    dv.add_argument("--beta", type=float, default=0.5)
    dv.set_defaults(func=cmd_divergence)

    mi = sub.add_parser("mi", parents=[common], help="exact conditional mutual information (Ising)")
    _add_spec_args(mi)
    mi.add_argument("--lam", type=float, required=True)
    mi.add_argument("--z", required=True, help="0/1 mask, comma-separated")
    mi.set_defaults(func=cmd_mi)

    sm = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo experiment")
    sm.add_argument("--config", required=True, help="JSON experiment config")
    sm.add_argument("--seed", type=int)
    sm.add_argument("--trials", type=int)
    sm.add_argument("--format", choices=["csv", "json"])
    sm.add_argument("--workers", type=int, default=1)
    sm.set_defaults(func=cmd_simulate)

    vf = sub.add_parser("verify", parents=[common], help="run the invariant checks")
    vf.add_argument("--scope", default="all", choices=["all", *verify.CHECKS])
    vf.set_defaults(func=cmd_verify)

    rp = sub.add_parser("report", parents=[common], help="re-render a JSON result table")
    rp.add_argument("input")
    rp.add_argument("--format", choices=["csv", "json"], default="csv")
    rp.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, TypeError) as exc:
        parser.error(str(exc))  # exits with status 2


if __name__ == "__main__":
    sys.exit(main())
