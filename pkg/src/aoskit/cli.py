"""Command-line entry point: ``aoskit {analyze,simulate,optimize,sweep}``.

Exit codes: 0 success, 1 invalid input, 2 solver did not converge, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import math
import sys
from dataclasses import replace

from . import experiments as ex
from .ctmc import DomainError, SymmetricSourceParams, expected_delta0, expected_visits_A
from .metrics import SourceBank, aoi_mean, aos_mean, bf_mean, eq22_fraction
from .polyblock import polyblock_solve
from .sim import SimConfig, UnderSampleError, replicate, run_replication

EXIT_OK, EXIT_INPUT, EXIT_NOCONV, EXIT_IO = 0, 1, 2, 3

fmt = ex.fmt


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _global_flags() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base RNG seed")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output CSV path (default: stdout)")
    g.add_argument("--config", default=argparse.SUPPRESS, help="TOML config file")
    g.add_argument("--preset", choices=sorted(ex.PRESETS), default=argparse.SUPPRESS,
                   help="named scenario preset")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(prog="aoskit", parents=[common],
                                     description="Age of Staleness analysis, simulation and rate allocation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", parents=[common], help="closed-form metrics for one source")
    a.add_argument("--n", type=int, required=True)
    a.add_argument("--sigma", type=float, required=True)
    a.add_argument("--lambda", dest="lam", type=float, required=True)

    s = sub.add_parser("simulate", parents=[common], help="Monte-Carlo replications for one source")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--horizon", type=float, default=1e5)
    s.add_argument("--reps", type=int, default=8)
    s.add_argument("--warmup", type=float, default=0.0)
    s.add_argument("--events", help="also export the event log of replication 0 to this CSV")

    o = sub.add_parser("optimize", parents=[common], help="polyblock allocation for a source bank")
    o.add_argument("--n", type=int, nargs="+")
    o.add_argument("--sigma", type=float, nargs="+")
    o.add_argument("--epsilon", type=float)
    o.add_argument("--delta", type=float)
    o.add_argument("--max-iters", type=int)
    o.add_argument("--trace", help="write the per-iteration bound trace to this CSV")

    w = sub.add_parser("sweep", parents=[common], help="sweep one source parameter")
    w.add_argument("--start", type=float)
    w.add_argument("--stop", type=float)
    w.add_argument("--step", type=float)
    w.add_argument("--epsilon", type=float)
    w.add_argument("--delta", type=float)
    w.add_argument("--horizon", type=float, help="add simulation columns with this horizon")
    w.add_argument("--reps", type=int)
    w.add_argument("--workers", type=int, default=1)
    return parser


@contextlib.contextmanager
def _open_out(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _overrides(obj, **kw):
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(obj, **kw) if kw else obj


def cmd_analyze(args) -> int:
    p = SymmetricSourceParams(args.n, args.sigma)
    lam = args.lam
    rows = {
        "aos_mean": aos_mean(lam, p),
        "aoi_mean": aoi_mean(lam) if lam > 0 else math.inf,
        "eq22_fraction": eq22_fraction(lam, p),
        "bf_mean": bf_mean(lam, p),
        "expected_delta0": expected_delta0(lam, p),
        "expected_visits_A": expected_visits_A(lam, p) if lam > 0 else math.inf,
    }
    for k, v in rows.items():
        print(f"{k}={fmt(v)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    p = SymmetricSourceParams(args.n, args.sigma)
    cfg = SimConfig(p, args.lam, args.horizon, seed=getattr(args, "seed", 0), warmup=args.warmup)
    summary = replicate(cfg, args.reps)
    out = getattr(args, "out", None)
    with _open_out(out) as fh:
        ex.write_simulation_csv(summary, fh)
    if args.events:
        _, log = run_replication(cfg, 0, record_log=True)
        log.write_csv(args.events)
    reference = {"aos": aos_mean(args.lam, p), "aoii": None, "aoi": aoi_mean(args.lam),
                 "bf": bf_mean(args.lam, p)}
    dest = sys.stdout if out else sys.stderr
    print("metric,sim_mean,se,analytic,z", file=dest)
    for m, ref in reference.items():
        mean, se = summary.mean[m], summary.se[m]
        if ref is None:
            print(f"{m},{fmt(mean)},{fmt(se)},,", file=dest)
        else:
            z = (mean - ref) / se if se > 0 else math.nan
            print(f"{m},{fmt(mean)},{fmt(se)},{fmt(ref)},{fmt(z)}", file=dest)
    return EXIT_OK


def cmd_optimize(args) -> int:
    spec = ex.load_spec(getattr(args, "config", None), getattr(args, "preset", None))
    n = args.n or list(spec.scenario.n)
    sigma = args.sigma or list(spec.scenario.sigma)
    bank = SourceBank.from_lists(n, sigma)
    solver = _overrides(spec.solver, epsilon=args.epsilon, delta=args.delta, max_iters=args.max_iters)
    res = polyblock_solve(bank, solver)
    print("best_alloc=" + " ".join(fmt(v) for v in res.best_alloc))
    for k in ("ub", "lb", "gap"):
        print(f"{k}={fmt(getattr(res, k))}")
    print(f"iterations={res.iterations}")
    print(f"converged={str(res.converged).lower()}")
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            ex.write_trace_csv(res, fh)
    return EXIT_OK if res.converged else EXIT_NOCONV


def cmd_sweep(args) -> int:
    spec = ex.load_spec(getattr(args, "config", None), getattr(args, "preset", None))
    scenario = _overrides(spec.scenario, start=args.start, stop=args.stop, step=args.step)
    solver = _overrides(spec.solver, epsilon=args.epsilon, delta=args.delta)
    sim = spec.sim
    if args.horizon is not None or args.reps is not None:
        sim = _overrides(sim or ex.SimOverlay(), horizon=args.horizon, reps=args.reps)
    if sim is not None and hasattr(args, "seed"):
        sim = replace(sim, seed=args.seed)
    spec = replace(spec, scenario=scenario, solver=solver, sim=sim)
    rows = ex.run_sweep(spec, workers=args.workers)
    out = getattr(args, "out", None) or spec.outputs.get("csv")
    with _open_out(out) as fh:
        ex.write_sweep_csv(rows, fh, scenario.K, sim is not None)
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate,
            "optimize": cmd_optimize, "sweep": cmd_sweep}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, UnderSampleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as exc:
        # sweep rows wrap their failure; classify by the underlying cause
        cause = exc.__cause__
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(cause, OSError):
            return EXIT_IO
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
