"""Command-line front end."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import engine, lp, output
from .config import ConfigError, dump_config, effective_config, parse_config
from .model import layout
from .schedules import enumerate_schedules

log = logging.getLogger("ncmcast")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _sim_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="YAML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", metavar="DIR", help="directory for CSV/JSON outputs")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--n", dest="n_users", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--eps", type=_floats)
    p.add_argument("--eps-range", type=_floats,
                   help="lo,hi applied to every user (switches to uniform fading)")
    p.add_argument("--scheduler", choices=["arq", "lps", "lys", "lys-beta"])
    p.add_argument("--beta", type=float)
    p.add_argument("--deadline", type=int)
    p.add_argument("--dv-mode", choices=["reduced", "full"])
    p.add_argument("--age-sign", choices=["prioritize-aged", "literal"])
    p.add_argument("--lps-refresh", choices=["static", "per-slot"])
    p.add_argument("--slots", type=int)
    return p


def _spec_from(args, defaults=None):
    text = None
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
    flags = {
        "n_users": args.n_users,
        "lambda": args.lam,
        "seed": args.seed,
        "slots": args.slots,
        "deadline": args.deadline,
        "channel.eps": _broadcast(args.eps, args.n_users),
        "scheduler.kind": args.scheduler,
        "scheduler.beta": args.beta,
        "scheduler.dv_mode": args.dv_mode,
        "scheduler.age_sign": args.age_sign,
        "scheduler.lps_refresh": args.lps_refresh,
    }
    if args.eps_range is not None:
        if len(args.eps_range) != 2:
            raise ConfigError("--eps-range", "expected lo,hi")
        n = args.n_users
        if n is None:
            raise ConfigError("--eps-range", "needs --n")
        flags["channel.mode"] = "uniform-fading"
        flags["channel.eps_range"] = [list(args.eps_range)] * n
    return parse_config(text, flags, out=args.out, threads=args.threads, defaults=defaults)


def _open_out(spec, name):
    os.makedirs(spec.out, exist_ok=True)
    return open(os.path.join(spec.out, name), "w", newline="")


def _echo_config(spec):
    if spec.out:
        with _open_out(spec, "config.yaml") as fh:
            fh.write(dump_config(spec.sim))


def cmd_simulate(args) -> int:
    spec = _spec_from(args)
    metrics = engine.run(spec.sim, record_queues=bool(spec.out))
    stable = None
    if metrics.slots >= engine.MIN_STABILITY_TRACE:
        ok, slope = engine.is_stable(metrics.backlog_trace, spec.sim.warmup_fraction)
        stable = {"stable": ok, "slope": slope}
    summary = {"config": effective_config(spec.sim), **metrics.summary(),
               "stability": stable, "trace_format": output.TRACE_FORMAT_VERSION}
    if spec.out:
        _echo_config(spec)
        with _open_out(spec, "trace.csv") as fh:
            output.write_trace_csv(metrics, fh)
        with _open_out(spec, "summary.json") as fh:
            output.write_json(summary, fh)
    output.write_json(summary, sys.stdout)
    return 0


def cmd_sweep(args) -> int:
    # the swept value replaces lambda, so it need not be given
    spec = _spec_from(args, {"lambda": 0.5} if args.param == "lambda" else None)
    points = engine.sweep(spec.sim, args.param, _grid(args.param, args.grid),
                          seeds=args.seeds, threads=spec.threads)
    if spec.out:
        _echo_config(spec)
        with _open_out(spec, "sweep.csv") as fh:
            output.write_sweep_csv(points, fh)
    output.write_sweep_csv(points, sys.stdout)
    return 0


def _grid(param, text):
    vals = _floats(text)
    if not vals:
        raise ConfigError("--grid", "empty grid")
    if param == "deadline":
        return [int(v) for v in vals]
    return vals


def _broadcast(eps, n):
    """A single ``--eps`` value applies to every user when ``--n`` is given."""
    if eps is not None and n is not None and len(eps) == 1:
        return list(eps) * n
    return eps


def cmd_capacity(args) -> int:
    eps = _broadcast(args.eps, args.n)
    if len(eps) != args.n:
        raise ConfigError("--eps", f"expected {args.n} values, got {len(eps)}")
    for i, e in enumerate(eps):
        if not 0.0 <= e < 1.0:
            raise ConfigError(f"--eps[{i}]", f"{e} outside [0, 1)")
    result = {
        "n_users": args.n,
        "eps": eps,
        "threshold": lp.capacity_threshold(eps),
        "lp_threshold": lp.lp_threshold(args.n, eps, tol=1e-4),
    }
    if args.lam is not None:
        sol = lp.solve_stability(args.n, eps, args.lam)
        result.update(
            {"lambda": args.lam, "status": sol.status, "delta_max": sol.delta_max,
             "p": None if sol.p is None else sol.p.tolist()})
    output.write_json(result, sys.stdout)
    return 0


def cmd_lambda_max(args) -> int:
    # lambda is the search variable; any valid value works as a placeholder
    spec = _spec_from(args, {"lambda": 0.5})
    est = engine.estimate_lambda_max(spec.sim, tolerance=args.tolerance, seeds=args.seeds,
                                     threads=spec.threads)
    result = {"config": effective_config(spec.sim), "lambda_max": est,
              "tolerance": args.tolerance, "seeds": args.seeds}
    if spec.out:
        _echo_config(spec)
        with _open_out(spec, "lambda_max.json") as fh:
            output.write_json(result, fh)
    output.write_json(result, sys.stdout)
    return 0


def cmd_schedules(args) -> int:
    scheds = enumerate_schedules(args.n, cap=args.cap)
    output.write_schedules_csv(scheds, layout(args.n).m, sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncmcast", description="Network-coded multicast scheduling simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _sim_parent()

    p = sub.add_parser("simulate", parents=[parent], help="run one simulation")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[parent], help="seed-averaged parameter sweep")
    p.add_argument("--param", required=True, choices=engine.SWEEP_PARAMS)
    p.add_argument("--grid", required=True, help="comma-separated values")
    p.add_argument("--seeds", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("capacity", help="stability LP and capacity threshold")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", type=_floats, required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("lambda-max", parents=[parent], help="bisection for the largest stable load")
    p.add_argument("--tolerance", type=float, default=0.01)
    p.add_argument("--seeds", type=int, default=3)
    p.set_defaults(func=cmd_lambda_max)

    p = sub.add_parser("schedules", help="incidence matrix of all schedules as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--cap", type=int, default=8)
    p.set_defaults(func=cmd_schedules)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
