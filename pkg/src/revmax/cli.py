"""Command-line interface: ``revmax run|validate|synth|analyze|oracle``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from . import __version__
from .exceptions import RevMaxError

THREADS_ENV = "REVMAX_NUM_THREADS"


def _set_threads():
    value = os.environ.get(THREADS_ENV)
    if value:
        import numba

        numba.set_num_threads(max(1, min(int(value), numba.config.NUMBA_NUM_THREADS)))


def _parse_params(items):
    out = {}
    for item in items:
        key, _, val = item.partition("=")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def cmd_run(args):
    from .bench import run_experiment, validate_config

    config = validate_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    jobs = args.jobs or int(os.environ.get(THREADS_ENV, "1"))
    out, ok = run_experiment(config, args.output, jobs=jobs)
    print(f"results written to {out}")
    return 0 if ok else 1


def cmd_validate(args):
    from .bench import validate_config

    config = validate_config(args.config)
    print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_synth(args):
    from .bench import synth_graph

    g = synth_graph(args.kind, _parse_params(args.params), args.seed, path=args.output, wc=args.wc)
    print(f"wrote {g.n} nodes, {g.m} arcs to {args.output}")
    return 0


def cmd_analyze(args):
    from .analysis import bound_report, make_tightness_instance
    from .bench import instance_from_config, validate_config

    if args.instance == "tightness":
        inst = make_tightness_instance()
    else:
        config = validate_config(args.instance)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        inst = instance_from_config(config)
    report = bound_report(inst)
    print(report.to_json() if args.json else report.to_text(), end="" if not args.json else "\n")
    return 0


def cmd_oracle(args):
    from ._rng import make_rng
    from .bench import validate_config, load_experiment_graph
    from .oracle import exact_spread, mc_spread

    config = validate_config(args.instance)
    graph = load_experiment_graph(config)
    seeds = [graph.index_of(_label(tok)) for tok in args.seedset.split(",") if tok]
    camp = config.campaigns[args.ad]
    if args.method == "exact":
        est = exact_spread(graph, camp, seeds)
    else:
        seed = config.seed if args.seed is None else args.seed
        est = mc_spread(graph, camp, seeds, args.runs, make_rng(seed))
    print(json.dumps({"spread": est.value, "method": est.method, "runs": est.runs, "seeds": seeds}))
    return 0


def _label(tok):
    try:
        return int(tok)
    except ValueError:
        return tok


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="revmax", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every cell of an experiment config")
    r.add_argument("config")
    r.add_argument("--output", "-o")
    r.add_argument("--seed", type=int)
    r.add_argument("--jobs", "-j", type=int, help=f"worker processes for cells (default ${THREADS_ENV} or 1)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a config and print it with defaults filled in")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("synth", help="write a synthetic graph")
    s.add_argument("kind", choices=["star", "chain", "random-directed", "two-community"])
    s.add_argument("params", nargs="*", help="key=value pairs, e.g. n=100 m=400")
    s.add_argument("--output", "-o", required=True)
    s.add_argument("--wc", action="store_true", help="weighted-cascade probabilities")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    a = sub.add_parser("analyze", help="curvature, ranks, bounds and optimum of a small instance")
    a.add_argument("instance", help="config file, or 'tightness' for the built-in tight instance")
    a.add_argument("--json", action="store_true")
    a.add_argument("--seed", type=int)
    a.set_defaults(func=cmd_analyze)

    o = sub.add_parser("oracle", help="spread of a seed set")
    o.add_argument("instance")
    o.add_argument("seedset", help="comma-separated node labels")
    o.add_argument("--ad", type=int, default=0)
    o.add_argument("--method", choices=["exact", "monte-carlo"], default="exact")
    o.add_argument("--runs", type=int, default=10_000)
    o.add_argument("--seed", type=int)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    _set_threads()
    try:
        return args.func(args)
    except RevMaxError as exc:
        errors = getattr(exc, "errors", [str(exc)])
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
