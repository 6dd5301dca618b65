"""Command-line entry point: ``krflow run | sweep | check-box | min-distance``."""

import argparse
import sys

import numpy as np

from .boxmotion import check_box, default_automorphisms, init_box, min_replica_distance
from .config import read_config
from .errors import (ConfigError, InvalidFlowError, InvalidParameterError, KrflowError,
                     UnsupportedFlowError)
from .flowdecomp import FlowKind, classify_flow, preset_flows

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _kinds(text):
    kinds = [k.strip().lower() for k in text.split(",") if k.strip()]
    for k in kinds:
        if k not in {f.value for f in FlowKind}:
            raise argparse.ArgumentTypeError(f"unknown flow kind {k!r}")
    return kinds


def _flow(args):
    kind = FlowKind(args.flow.lower())
    return classify_flow(preset_flows(kind, args.rate, args.rot_rate if kind is FlowKind.MIXED else None))


def build_parser():
    p = argparse.ArgumentParser(prog="krflow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="one simulation from a key=value config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default="krflow-run")
    r.add_argument("--no-plots", action="store_true")

    s = sub.add_parser("sweep", help="strain-rate sweep over flow kinds and seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--kinds", type=_kinds, default=["pef", "usf", "bsf"])
    s.add_argument("--rates", type=_floats, default=None,
                   help="comma-separated rates (default: 10 log-spaced in [0.05, 1.2])")
    s.add_argument("--seeds", type=int, default=None, help="seeds per rate (default: config realizations)")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", default="krflow-sweep")
    s.add_argument("--no-eq", action="store_true", help="skip the A = 0 reference runs")
    s.add_argument("--no-plots", action="store_true")

    for name, helptext in (("check-box", "box-only boundedness and volume check"),
                           ("min-distance", "replica-floor certificate for a flow")):
        c = sub.add_parser(name, help=helptext)
        c.add_argument("--flow", required=True, choices=[f.value for f in FlowKind])
        c.add_argument("--rate", type=float, default=1.0)
        c.add_argument("--rot-rate", type=float, default=1.0)
        c.add_argument("--a", type=float, default=1.0)
        if name == "check-box":
            c.add_argument("--steps", type=int, default=10 ** 7)
            c.add_argument("--dt", type=float, default=0.002)
            c.add_argument("--trace", default=None, help="write (t, theta, eps) rows to this CSV")
            c.add_argument("--trace-every", type=int, default=1000)
    return p


def _cmd_run(args):
    from .harness import run

    cfg = read_config(args.config)
    rep = run(cfg, out_dir=args.out, plots=not args.no_plots)
    sys.stdout.write(rep.to_text())
    return EXIT_OK


def _cmd_sweep(args):
    from .harness import DEFAULT_RATES, SUMMARY_COLUMNS, fmt, sweep

    cfg = read_config(args.config)
    seeds = cfg.realizations if args.seeds is None else args.seeds
    if seeds < 1 or args.jobs < 1:
        raise ConfigError("--seeds and --jobs must be >= 1")
    res = sweep(cfg, args.kinds, args.rates or list(DEFAULT_RATES), seeds, jobs=args.jobs,
                out_dir=args.out, equilibrium=not args.no_eq, plots=not args.no_plots)
    sys.stdout.write(",".join(SUMMARY_COLUMNS) + "\n")
    for row in res.summary:
        sys.stdout.write(",".join(fmt(row[c]) for c in SUMMARY_COLUMNS) + "\n")
    for f in res.failures:
        sys.stderr.write(f"failed: kind={f['kind']} eps={f['eps']} seed={f['seed']}: {f['message']}\n")
    return EXIT_PARTIAL if res.failures else EXIT_OK


def _cmd_check_box(args):
    from .harness import write_csv

    dec = _flow(args)
    basis = default_automorphisms()
    state = init_box(dec, basis, args.a)
    res = check_box(state, args.dt, args.steps, args.trace_every if args.trace else 0)
    if args.trace:
        write_csv(args.trace, ["t", "theta1", "theta2", "eps1", "eps2", "eps3"], res.trace.tolist())
    floor = min_replica_distance(dec, basis, args.a)
    lines = [("flow", args.flow), ("mode", res.mode), ("steps", res.steps), ("dt", res.dt),
             ("theta_in_range", res.theta_in_range), ("first_bad_step", res.first_bad_step),
             ("max_det_rel_error", res.max_det_rel_error), ("max_abs_eps_tilde", res.max_abs_eps_tilde),
             ("eps_bound", res.eps_bound), ("remaps", res.remaps),
             ("final_theta", f"{res.final_theta[0]!r};{res.final_theta[1]!r}"),
             ("replica_floor", floor), ("ok", res.ok)]
    sys.stdout.write("".join(f"{k}={v}\n" for k, v in lines))
    return EXIT_OK if res.ok else EXIT_NUMERIC


def _cmd_min_distance(args):
    dec = _flow(args)
    d = min_replica_distance(dec, default_automorphisms(), args.a)
    sys.stdout.write(f"flow={args.flow}\nclass={dec.kind.value}\na={args.a!r}\n"
                     f"min_replica_distance={d!r}\nratio={d / args.a!r}\n")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "check-box": _cmd_check_box,
               "min-distance": _cmd_min_distance}[args.command]
    try:
        return handler(args)
    except (ConfigError, InvalidParameterError, InvalidFlowError, UnsupportedFlowError) as exc:
        sys.stderr.write(f"krflow: configuration error: {exc}\n")
        return EXIT_CONFIG
    except KrflowError as exc:
        sys.stderr.write(f"krflow: aborted: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
