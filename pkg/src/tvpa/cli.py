"""Command-line front end: ``tvpa simulate|estimate|test|detect|locate|experiment``.

Every subcommand accepts ``--config FILE``, a flat ``key = value`` file whose
keys are long option names (``a1``, ``T``, ``from`` ...).  Flags given on the
command line override the file.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .changepoint import locate, pair_test, refine_interval, scan, two_step_detect
from .errors import ConfigError, TvpaError
from .estimation import SolverConfig, chi2_1_sf, equal_boundaries, estimate_intervals
from .experiments import (
    SCENARIOS,
    make_bernoulli_design,
    make_section4_design,
    make_vertex_design,
    run_replications,
    scenario_configs,
    write_results,
)
from .process import ParamSchedule, StepSchedule, Trace, simulate_chain, simulate_graph

PRESETS = {"section4": make_section4_design, "random": make_bernoulli_design, "vertex": make_vertex_design}


def _clean(obj):
    """Make a report JSON-safe: non-finite floats become null, numpy scalars plain."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _emit(report, out):
    text = json.dumps(_clean(report), indent=2, allow_nan=False) + "\n"
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _solver_flags(p):
    p.add_argument("--er", type=float, default=0.01, help="residual tolerance on |f(a) - x| (default 0.01)")
    p.add_argument("--level", type=float, default=0.95, help="confidence level (default 0.95)")


def _trace_flags(p):
    p.add_argument("--trace", help="input trace CSV (t,y,v,x[,a_true])")
    p.add_argument("--from", dest="from_", type=int, default=0, metavar="T0", help="interval start (default 0)")
    p.add_argument("--to", type=int, metavar="T1", help="interval end (default: last step)")


def build_parser():
    parser = argparse.ArgumentParser(prog="tvpa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tvpa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a trace")
    p.add_argument("--preset", choices=sorted(PRESETS), default="section4")
    p.add_argument("--T", type=int, default=7500)
    p.add_argument("--a1", type=float, default=1.0)
    p.add_argument("--a2", type=float, default=1.0)
    p.add_argument("--a3", type=float, default=1.0)
    p.add_argument("--p", type=float, default=0.5, help="vertex-step probability for --preset random")
    p.add_argument("--simulator", choices=("chain", "graph"), default="chain")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="trace CSV to write")

    p = sub.add_parser("estimate", help="estimate a on one interval or on k equal intervals")
    _trace_flags(p)
    p.add_argument("--k", type=int, default=1)
    _solver_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("test", help="chi-square test of equal offsets")
    _trace_flags(p)
    p.add_argument("--k", type=int, default=2, help="2: compare the halves; k>=3: compare B_(i-1) with B_(i+1)")
    _solver_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("detect", help="scan, refine or two-step change-point detection")
    _trace_flags(p)
    p.add_argument("--mode", choices=("scan", "refine", "two-step"), default="scan")
    p.add_argument("--k", type=int, default=None, help="number of subintervals (scan default 30, refine default 5)")
    p.add_argument("--ct", type=float, help="threshold for the threshold count (default sqrt(T))")
    p.add_argument("--method", choices=("threshold", "chi2", "ratio"), default="chi2")
    p.add_argument("--q-max", type=int, default=None, help="refinement stages after the first")
    p.add_argument("--k-refine", type=int, default=5)
    _solver_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("locate", help="locate a single change point")
    _trace_flags(p)
    _solver_flags(p)
    p.add_argument("--out", help="diagnostic CSV (t, |x_hat_t - x_t|)")
    p.add_argument("--report", help="JSON report (default: stdout)")

    p = sub.add_parser("experiment", help="run a Monte Carlo scenario")
    p.add_argument("--scenario", choices=SCENARIOS, type=lambda s: {x.upper(): x for x in SCENARIOS}.get(s.upper(), s))
    p.add_argument("--reps", type=int, help="replications per cell (default: the scenario's)")
    p.add_argument("--T", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--ct", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    _solver_flags(p)
    p.add_argument("--out", help="output directory for tables and manifest.json")

    for sp in sub.choices.values():
        sp.add_argument("--config", help="flat key = value file; flags override it")
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sp = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sp._actions} | {"from"}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ConfigError(f"{args.config}: unknown keys {unknown}")
        if "from" in cfg:
            cfg["from_"] = cfg.pop("from")
        cfg.pop("config", None)
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise ConfigError(f"{args.command}: missing --{', --'.join(m.rstrip('_') for m in missing)}")


def _seed(args):
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy)
    return args.seed


def _load(args):
    _need(args, "trace")
    trace = Trace.read_csv(args.trace)
    t1 = trace.T if args.to is None else args.to
    if not 0 <= args.from_ < t1 <= trace.T:
        raise ConfigError(f"need 0 <= --from < --to <= {trace.T}, got ({args.from_}, {t1})")
    return trace, args.from_, t1


def _solver(args):
    return SolverConfig(er=args.er, level=args.level)


def cmd_simulate(args):
    _need(args, "out")
    seed = _seed(args)
    a = (args.a1, args.a2, args.a3)
    if min(a) <= -1:
        raise ConfigError(f"offsets must exceed -1, got {a}")
    if args.preset == "random":
        ps, ss = make_bernoulli_design(args.T, args.p, *a)
    else:
        ps, ss = PRESETS[args.preset](args.T, *a)
    if args.simulator == "graph":
        trace, _ = simulate_graph(ps, ss, seed=seed)
    else:
        trace = simulate_chain(ps, ss, seed=seed)
    trace.to_csv(args.out)
    print(f"T={trace.T} v_T={trace.v[-1]} x_T={trace.x[-1]} seed={seed}")


def cmd_estimate(args):
    trace, t0, t1 = _load(args)
    if args.k < 1:
        raise ConfigError("--k must be >= 1")
    ests = estimate_intervals(trace, equal_boundaries(t0, t1, args.k), _solver(args))
    _emit({"command": "estimate", "estimates": [e.to_dict() for e in ests]}, args.out)


def cmd_test(args):
    trace, t0, t1 = _load(args)
    if args.k < 2:
        raise ConfigError("--k must be >= 2")
    bounds = equal_boundaries(t0, t1, args.k)
    ests = estimate_intervals(trace, bounds, _solver(args))
    pairs = [(0, 1)] if args.k == 2 else [(i - 2, i) for i in range(2, args.k)]
    tests = []
    for i, j in pairs:
        L = pair_test(ests[i], ests[j])
        tests.append(
            {
                "left": [bounds[i], bounds[i + 1]],
                "right": [bounds[j], bounds[j + 1]],
                "L": L,
                "p_value": chi2_1_sf(L),
            }
        )
    _emit({"command": "test", "boundaries": bounds, "tests": tests}, args.out)


def cmd_detect(args):
    trace, t0, t1 = _load(args)
    cfg = _solver(args)
    report = {"command": "detect", "mode": args.mode}
    if args.mode == "refine":
        k = args.k or 5
        q = 3 if args.q_max is None else args.q_max
        report["refine"] = refine_interval(trace, k, q, lo=t0, hi=t1, cfg=cfg).to_dict()
    else:
        sr = scan(trace, args.k or 30, ct=args.ct, cfg=cfg, t0=t0, t1=t1)
        report["scan"] = sr.to_dict()
        if args.mode == "two-step":
            q = 1 if args.q_max is None else args.q_max
            res = two_step_detect(trace, sr.k, args.method, args.k_refine, q, cfg=cfg, scan_result=sr)
            report["method"] = args.method
            report["refinements"] = [r.to_dict() for r in res]
    _emit(report, args.out)


def cmd_locate(args):
    trace, t0, t1 = _load(args)
    res = locate(trace, t0, t1, _solver(args))
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write("t,diagnostic\n")
            for t, d in zip(range(t0, t1 + 1), res.diagnostic):
                fh.write(f"{t},{float(d)!r}\n")
    _emit({"command": "locate", **res.to_dict()}, args.report)


def cmd_experiment(args):
    _need(args, "scenario", "out")
    seed = _seed(args)
    over = {"solver": _solver(args)}
    if args.k is not None:
        over["k"] = args.k
    if args.ct is not None:
        over["ct"] = args.ct
    cfgs = scenario_configs(args.scenario, n_reps=args.reps, seed=seed, T=args.T, **over)
    summaries = [run_replications(c, workers=args.workers) for c in cfgs]
    write_results(summaries, args.out, extra={"seed": seed, "argv": sys.argv[1:]})
    failed = sum(s.n_failed for s in summaries)
    print(f"scenario={args.scenario} tables={len(summaries)} failed_reps={failed} seed={seed} out={args.out}")


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "test": cmd_test,
    "detect": cmd_detect,
    "locate": cmd_locate,
    "experiment": cmd_experiment,
}


def main(argv=None):
    try:
        args = parse_args(argv)
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"tvpa: config error: {exc}", file=sys.stderr)
        return 2
    except (TvpaError, ValueError, ArithmeticError, OSError) as exc:
        print(f"tvpa: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
