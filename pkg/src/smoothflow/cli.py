"""Command-line front end.

Every command writes its CSV/SVG/JSON artifacts into the output directory
(``--out``, else the config's ``out``, else $SMOOTHFLOW_OUT, else ./smoothflow-out)
and exits 0 only when all asserted properties pass. Failures are printed as a
JSON list on stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import bench, report
from .dynamics import PowerSchedule, diagnostics, integrate_gradflow, integrate_inertial, schedule_check
from .errors import SmoothflowError
from .reference import reference_solve
from .runconfig import ConfigError, load_config

DEFAULTS_HELP = """\
config defaults (TOML sections; unknown keys are rejected):
  seed = 2                 top-level seed, expanded per component by label
  out                      output directory
  [moo]      alpha=3.1 c=1.0 r_values=[2.1,3,5] t0=1 T=50 x0=[0,0] v0=[0,0]
             samples=400 penalty="entropic"|"quadratic"
  [dro]      alpha=3.1 c=1.0 r_values=[2.1,3,5] t0=1 T=20 n=5 m=6 samples=400
  [profile]  mus=[1.0,0.5,0.1] x_min=-2 x_max=2 box_x_min=-1 box_x_max=3 points=401
  [run]      alpha=3.1 c=1.0 r=3.0 t0=1 T=50 x0 (zeros) v0 (zeros) samples=400
  [run.problem]  kind="moo"|"dro"|"quadratic"; quadratic needs centers and
                 diagonals or matrices (offsets optional)
  [run.problem.set]      kind="simplex"|"box"|"lpball"|"vertices"|"moment" (+ lower/upper, p,
                         vertices, A/b)
  [run.problem.penalty]  kind="kl"|"quadratic"|"kl-pushforward" (+ prior, center)
  [schedule] c=1.0 r=2.1 t0=1 require="inertial"|"gradflow"|"none"
environment:
  SMOOTHFLOW_OUT           default output directory
"""


def _global_flags(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="TOML run configuration")
    p.add_argument("--out", default=d, help="output directory (default: $SMOOTHFLOW_OUT or ./smoothflow-out)")
    p.add_argument("--seed", type=int, default=d, help="top-level seed (u64, default 2)")
    p.add_argument("--quiet", action="store_true", default=d, help="only print failures")


def build_parser():
    parser = argparse.ArgumentParser(prog="smoothflow", description="Smoothed supremum functions and inertial dynamics.",
                                     epilog=DEFAULTS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {
        "smooth-profile": "tabulate phi and phi_mu for the 1-D illustrations and plot overlays",
        "bench-moo": "quadratic multiobjective benchmark (max scalarization)",
        "bench-dro": "KL-regularized DRO benchmark",
        "run-inertial": "integrate the inertial system for the [run] problem",
        "run-gradflow": "integrate the first-order flow for the [run] problem",
        "check-schedule": "integrability flags for mu(t) = c t^-r",
        "reference-solve": "certified inf phi for the [run] problem",
    }
    for name, help_ in cmds.items():
        sp = sub.add_parser(name, help=help_, description=help_)
        _global_flags(sp, suppress=True)
        if name in ("bench-moo", "bench-dro"):
            sp.add_argument("--jobs", type=int, default=1, help="worker processes for the r grid")
        if name == "check-schedule":
            sp.add_argument("--r", type=float, default=None, help="override schedule.r")
            sp.add_argument("--c", type=float, default=None, help="override schedule.c")
    return parser


def _out_dir(args, cfg):
    out = getattr(args, "out", None) or cfg.out or os.environ.get("SMOOTHFLOW_OUT") or "smoothflow-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


class Reporter:
    def __init__(self, quiet):
        self.quiet = quiet

    def info(self, msg):
        if not self.quiet:
            print(msg)

    def checks(self, rep):
        for c in rep.checks:
            self.info(f"  [{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.value!r} ({c.threshold})")


def _finish(rep, out, say):
    paths = rep.write(out)
    say.checks(rep)
    say.info(f"wrote {len(paths)} files to {out}")
    if not rep.passed:
        print(json.dumps({"failures": rep.failures}, indent=2, sort_keys=True))
        return 1
    return 0


def _cmd_bench(fn, args, cfg, out, say):
    t = time.perf_counter()
    rep = fn(cfg, jobs=args.jobs) if fn is not bench.smooth_profile else fn(cfg)
    say.info(f"{rep.name}: {time.perf_counter() - t:.1f} s")
    return _finish(rep, out, say)


def _cmd_run(args, cfg, out, say, kind):
    rc = cfg.run
    problem = bench.build_problem(rc.problem, cfg.seed)
    n = problem.objectives.n
    x0 = np.zeros(n) if rc.x0 is None else np.asarray(rc.x0, float)
    v0 = np.zeros(n) if rc.v0 is None else np.asarray(rc.v0, float)
    ref = reference_solve(problem, x0=x0)
    sched = PowerSchedule(rc.c, rc.r)
    if kind == "inertial":
        traj = integrate_inertial(problem, sched, rc.alpha, rc.t0, rc.T, x0, v0, rc.samples)
    else:
        traj = integrate_gradflow(problem, sched, rc.t0, rc.T, x0, rc.samples)
    d = diagnostics(traj, ref.inf_phi, ref.x_star, problem, sched, rc.alpha)
    rep = bench.BenchReport(f"run_{kind}")
    rep.diagnostics[f"r{rc.r:g}"] = d
    rep.summary["reference"] = bench._reference_summary(ref)
    rep.summary["x_T"] = [float(v) for v in d.x[-1]]
    rep.summary["warnings"] = d.warnings
    rep.check("reference bracket certified", ref.certified, ref.width, "<= 1e-8 (1 + |inf phi|)")
    rep.check("W >= 0 at every sample", d.W_nonnegative() == 1.0, d.W_nonnegative(), "fraction == 1")
    if kind == "inertial":
        lb = d.energy_lower_bound()
        rep.check("E >= -C t^2 mu / (alpha-1)^2", lb == 1.0, lb, "fraction == 1")
        ed = d.energy_derivative_check()
        rep.check("energy derivative bound", ed["fraction"] >= 0.99, ed["fraction"], ">= 0.99")
    else:
        f = d.gradflow_F_monotone()
        rep.check("F = zeta + C mu nonincreasing", f == 1.0, f, "fraction == 1")
    rep.plots["residuals"] = report.residual_plot([d], [f"r{rc.r:g}"], f"{kind}: residual")
    for w in d.warnings:
        print(f"WARNING: {w}", file=sys.stderr)
    return _finish(rep, out, say)


def _cmd_schedule(args, cfg, out, say):
    sc = cfg.schedule
    c = args.c if args.c is not None else sc.c
    r = args.r if args.r is not None else sc.r
    rep_s = schedule_check(PowerSchedule(c, r), sc.t0)
    rep = bench.BenchReport("schedule")
    rep.summary = {"c": c, "r": r, "flags": rep_s.flags, "probe_times": rep_s.probe_times, "t2mu": rep_s.t2mu,
                   "t2mu_decreasing": rep_s.t2mu_decreasing}
    rep.check("mu nonincreasing", rep_s.nonincreasing)
    if sc.require == "inertial":
        rep.check("t mu in L1 (r > 2)", rep_s.flags["tmu_integrable"])
        rep.check("t^2 |mu'| in L1 (r > 2)", rep_s.flags["t2mudot_integrable"])
        rep.check("t^2 mu(t) decreasing on probes", bool(rep_s.t2mu_decreasing))
    elif sc.require == "gradflow":
        rep.check("mu in L1 (r > 1)", rep_s.flags["l1_integrable"])
    say.info(json.dumps(rep.summary, sort_keys=True))
    return _finish(rep, out, say)


def _cmd_reference(args, cfg, out, say):
    problem = bench.build_problem(cfg.run.problem, cfg.seed)
    ref = reference_solve(problem, x0=cfg.run.x0)
    rep = bench.BenchReport("reference")
    rep.summary = {**bench._reference_summary(ref), "details": ref.details}
    rep.check("reference bracket certified", ref.certified, ref.width, "<= 1e-8 (1 + |inf phi|)")
    say.info(json.dumps(bench._reference_summary(ref), sort_keys=True))
    return _finish(rep, out, say)


def main(argv=None):
    args = build_parser().parse_args(argv)
    say = Reporter(bool(getattr(args, "quiet", False)))
    try:
        cfg = load_config(getattr(args, "config", None), seed=getattr(args, "seed", None))
        out = _out_dir(args, cfg)
        if args.command == "smooth-profile":
            return _cmd_bench(bench.smooth_profile, args, cfg, out, say)
        if args.command == "bench-moo":
            return _cmd_bench(bench.bench_moo_quadratic, args, cfg, out, say)
        if args.command == "bench-dro":
            return _cmd_bench(bench.bench_dro, args, cfg, out, say)
        if args.command == "run-inertial":
            return _cmd_run(args, cfg, out, say, "inertial")
        if args.command == "run-gradflow":
            return _cmd_run(args, cfg, out, say, "gradflow")
        if args.command == "check-schedule":
            return _cmd_schedule(args, cfg, out, say)
        return _cmd_reference(args, cfg, out, say)
    except (ConfigError, SmoothflowError, ValueError, OSError) as exc:
        print(json.dumps({"failures": [{"name": type(exc).__name__, "detail": str(exc)}]}, indent=2))
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
