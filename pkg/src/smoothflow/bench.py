"""Benchmark suites: quadratic multiobjective (max scalarization), DRO, smoothing profiles."""

from __future__ import annotations

import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import report
from .dro import DROProblem, make_dro_benchmark
from .dynamics import PowerSchedule, diagnostics, dyadic_envelope, integrate_gradflow, integrate_inertial
from .objectives import CallableFamily, QuadraticFamily
from .penalties import KL, KLPushforward, QuadraticToCenter
from .reference import reference_solve
from .runconfig import Config, config_hash
from .sets import Box, LpBall, MomentPolytope, Simplex, VertexPolytope
from .smoothing import SupProblem, reg_value, sandwich_check, sup_value

MOO_X_STAR = np.array([2.0 / 3.0, 2.0 / 3.0])
MOO_INF_PHI = 1.0 / 3.0


def derive_seed(seed, label):
    """Independent 64-bit stream seed for a named component."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(label.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# --------------------------------------------------------------------------- #
# Problems
# --------------------------------------------------------------------------- #


def moo_family():
    return QuadraticFamily.diagonal([[2.0, 1.0], [1.0, 2.0]], [[1.0, 0.0], [0.0, 1.0]])


def moo_problem(penalty="entropic"):
    D = KL.uniform(2) if penalty == "entropic" else QuadraticToCenter(np.array([0.5, 0.5]))
    return SupProblem(moo_family(), Simplex(2), D)


def pareto_curve(points=201):
    """(2 rho / (rho + 1), 2 (1 - rho) / (2 - rho)) for rho in [0, 1]."""
    rho = np.linspace(0.0, 1.0, points)
    return np.column_stack([2 * rho / (rho + 1), 2 * (1 - rho) / (2 - rho)])


def dro_problem(seed, n=5, m=6):
    costs, aset = make_dro_benchmark(derive_seed(seed, "dro-instance"), n, m)
    return DROProblem(costs, aset)


def _build_set(cfg, m):
    k = cfg.kind
    if k == "simplex":
        return Simplex(m)
    if k == "box":
        return Box(np.asarray(cfg.lower, float), np.asarray(cfg.upper, float))
    if k == "lpball":
        return LpBall(m, math.inf if cfg.p is None or cfg.p == math.inf else cfg.p)
    if k == "vertices":
        return VertexPolytope(np.asarray(cfg.vertices, float))
    return MomentPolytope(np.asarray(cfg.A, float).reshape(-1, m), np.asarray(cfg.b, float))


def _build_penalty(cfg, Q):
    if cfg.kind == "kl":
        return KL(np.asarray(cfg.prior, float)) if cfg.prior else KL.uniform(Q.dim)
    if cfg.kind == "kl-pushforward":
        k = Q.vertices.shape[0]
        return KLPushforward(np.asarray(cfg.prior, float)) if cfg.prior else KLPushforward.uniform(k)
    center = np.asarray(cfg.center, float) if cfg.center else Q.interior_point()
    return QuadraticToCenter(center)


def build_problem(pcfg, seed=2):
    """Problem object from a validated ProblemConfig."""
    if pcfg.kind == "moo":
        return moo_problem()
    if pcfg.kind == "dro":
        return dro_problem(seed)
    if pcfg.matrices is not None:
        fam = QuadraticFamily(np.asarray(pcfg.matrices, float), np.asarray(pcfg.centers, float), pcfg.offsets)
    else:
        fam = QuadraticFamily.diagonal(np.asarray(pcfg.diagonals, float), np.asarray(pcfg.centers, float),
                                       pcfg.offsets)
    Q = _build_set(pcfg.set, fam.m)
    return SupProblem(fam, Q, _build_penalty(pcfg.penalty, Q))


# --------------------------------------------------------------------------- #
# Reports
# --------------------------------------------------------------------------- #


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    threshold: str = ""
    detail: str = ""

    def as_dict(self):
        v = None if self.value is None else float(self.value)
        if v is not None and not math.isfinite(v):
            v = str(v)
        return {"name": self.name, "passed": bool(self.passed), "value": v, "threshold": self.threshold,
                "detail": self.detail}


@dataclass
class BenchReport:
    name: str
    checks: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)  # label -> Diagnostics
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    plots: dict = field(default_factory=dict)  # name -> PlotSpec
    summary: dict = field(default_factory=dict)

    def check(self, name, passed, value=None, threshold="", detail=""):
        self.checks.append(Check(name, bool(passed), value, threshold, detail))

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c.as_dict() for c in self.checks if not c.passed]

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for label, d in self.diagnostics.items():
            written.append(report.write_trajectory_csv(out / f"{self.name}_{label}.csv", d))
        for name, (header, rows) in self.tables.items():
            written.append(report.write_csv(out / f"{self.name}_{name}.csv", header, rows))
        for name, spec in self.plots.items():
            written.append(report.write_svg(out / f"{self.name}_{name}.svg", spec))
        payload = {"name": self.name, "passed": self.passed, "checks": [c.as_dict() for c in self.checks],
                   "summary": self.summary}
        path = out / f"{self.name}_summary.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
        return written


def envelope_slope(t, y, lo, hi):
    """Least-squares slope of log(dyadic-window max) against log(window centre)."""
    env = [(a, b, v) for a, b, v in dyadic_envelope(t, y, lo, hi) if v > 0 and np.isfinite(v)]
    if len(env) < 2:
        return float("nan")
    xs = np.log([math.sqrt(a * b) for a, b, _ in env])
    ys = np.log([v for _, _, v in env])
    return float(np.polyfit(xs, ys, 1)[0])


def bounded_tail(t, y, lo, hi, growth=2.0):
    """Finite sup on [lo, hi] and no dyadic window exceeding the first one by more than ``growth``."""
    env = [v for _, _, v in dyadic_envelope(t, y, lo, hi)]
    env = [v for v in env if not math.isnan(v)]
    if not env or not all(math.isfinite(v) for v in env):
        return False, float("inf")
    return max(env) <= growth * max(env[0], 1e-300) or max(env) < 1e-12, max(env)


def _trajectory_checks(rep, label, d, alpha, tail_lo, x_star=None):
    sup = d.tail_sup("t2_abs_residual", tail_lo)
    ok, _ = bounded_tail(d.t, d.t2_abs_residual, tail_lo, d.t[-1])
    rep.check(f"{label}: t^2|zeta| bounded on [{tail_lo:g}, {d.t[-1]:g}]", ok, sup, "finite, no dyadic growth > 2x")
    rep.check(f"{label}: W >= 0", d.W_nonnegative() == 1.0, d.W_nonnegative(), "fraction == 1")
    if x_star is not None and d.kind == "inertial":
        lb = d.energy_lower_bound()
        rep.check(f"{label}: E >= -C t^2 mu / (alpha-1)^2", lb == 1.0, lb, "fraction == 1")
        ed = d.energy_derivative_check()
        rep.check(f"{label}: energy derivative bound", ed["fraction"] >= 0.99, ed["fraction"], "fraction >= 0.99")


# --------------------------------------------------------------------------- #
# Reference cache
# --------------------------------------------------------------------------- #

_REFERENCE_CACHE = {}


def cached_reference(key, problem, **kwargs):
    if key not in _REFERENCE_CACHE:
        _REFERENCE_CACHE[key] = reference_solve(problem, **kwargs)
    return _REFERENCE_CACHE[key]


def _reference_summary(ref):
    return {"inf_phi": ref.inf_phi, "x_star": [float(v) for v in ref.x_star], "bracket": list(ref.bracket),
            "width": ref.width, "certified": ref.certified, "method": ref.method}


# --------------------------------------------------------------------------- #
# Grid cells (module level so they pickle for worker processes)
# --------------------------------------------------------------------------- #


def _moo_cell(args):
    penalty, alpha, c, r, t0, T, x0, v0, samples, inf_phi, x_star = args
    problem = moo_problem(penalty)
    sched = PowerSchedule(c, r)
    traj = integrate_inertial(problem, sched, alpha, t0, T, x0, v0, samples)
    return diagnostics(traj, inf_phi, x_star, problem, sched)


def _dro_cell(args):
    seed, n, m, alpha, c, r, t0, T, samples, inf_phi, x_star = args
    problem = dro_problem(seed, n, m)
    sched = PowerSchedule(c, r)
    traj = integrate_inertial(problem, sched, alpha, t0, T, np.zeros(n), np.zeros(n), samples)
    return diagnostics(traj, inf_phi, x_star, problem, sched)


def _run_cells(fn, cells, jobs):
    if jobs and jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(cells))) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def _label(r):
    return f"r{r:g}"


# --------------------------------------------------------------------------- #
# Suites
# --------------------------------------------------------------------------- #


def bench_moo_quadratic(cfg: Config | None = None, jobs=1):
    cfg = cfg or Config()
    mc = cfg.moo
    rep = BenchReport("moo")
    problem = moo_problem(mc.penalty)
    ref = cached_reference(("moo", mc.penalty), problem)
    rep.summary["reference"] = _reference_summary(ref)
    rep.check("reference x* matches (2/3, 2/3)", np.max(np.abs(ref.x_star - MOO_X_STAR)) <= 1e-6,
              float(np.max(np.abs(ref.x_star - MOO_X_STAR))), "<= 1e-6")
    rep.check("reference inf phi matches 1/3", abs(ref.inf_phi - MOO_INF_PHI) <= 1e-8,
              abs(ref.inf_phi - MOO_INF_PHI), "<= 1e-8")
    rep.check("reference bracket certified", ref.certified, ref.width, "<= 1e-8 (1 + |inf phi|)")

    cells = [(mc.penalty, mc.alpha, mc.c, r, mc.t0, mc.T, mc.x0, mc.v0, mc.samples, ref.inf_phi, ref.x_star)
             for r in mc.r_values]
    diags = _run_cells(_moo_cell, cells, jobs)
    per_r = {}
    for r, d in zip(mc.r_values, diags):
        lab = _label(r)
        rep.diagnostics[lab] = d
        dist = float(np.linalg.norm(d.x[-1] - ref.x_star))
        gap = abs(float(d.value_raw[-1]) - ref.inf_phi)
        rep.check(f"{lab}: |x(T) - x*| <= 1e-2", dist <= 1e-2, dist, "<= 1e-2")
        rep.check(f"{lab}: |phi(x(T)) - inf phi| <= 1e-2", gap <= 1e-2, gap, "<= 1e-2")
        _trajectory_checks(rep, lab, d, mc.alpha, 5.0, ref.x_star)
        slope = envelope_slope(d.t, np.abs(d.residual), mc.T / 10, mc.T)
        rep.check(f"{lab}: residual envelope slope over final decade <= -2", slope <= -2.0, slope, "<= -2")
        per_r[lab] = {"x_T": [float(v) for v in d.x[-1]], "sup_t2_abs_residual_tail": d.tail_sup("t2_abs_residual", 5.0),
                      "final_decade_slope": slope}
    rep.summary["runs"] = per_r

    labels = list(rep.diagnostics)
    rep.plots["residuals"] = report.residual_plot(diags, labels, "Quadratic MOO: residuals")
    pc = pareto_curve()
    series = [report.Series(lab, d.x[:, 0], d.x[:, 1]) for lab, d in zip(labels, diags)]
    series.append(report.Series("Pareto set", pc[:, 0], pc[:, 1], dashed=True, color="#000000"))
    series.append(report.Series("x*", np.array([ref.x_star[0]]), np.array([ref.x_star[1]]), color="#000000"))
    rep.plots["trajectories"] = report.PlotSpec("Quadratic MOO: trajectories", "x_1", "x_2", series)
    rep.tables["pareto"] = (["rho", "x_1", "x_2"], [[rho, *p] for rho, p in zip(np.linspace(0, 1, pc.shape[0]), pc)])
    return rep


def tilting_tail_ratio(problem, x=None, mu=1.0):
    """Ratio of the last two Newton residuals on a solve from theta = 0."""
    from .dro import solve_tilting

    x = np.zeros(problem.objectives.n) if x is None else x
    sol = solve_tilting(problem.objectives.values(x), problem.set, mu, problem.prior)
    h = sol.residual_history
    return (h[-1] / h[-2]) if len(h) >= 2 and h[-2] > 0 else 0.0, sol


def bench_dro(cfg: Config | None = None, jobs=1):
    cfg = cfg or Config()
    dc = cfg.dro
    rep = BenchReport("dro")
    problem = dro_problem(cfg.seed, dc.n, dc.m)
    ref = cached_reference(("dro", cfg.seed, config_hash(dc)), problem)
    rep.summary["reference"] = _reference_summary(ref)
    rep.summary["instance_seed"] = derive_seed(cfg.seed, "dro-instance")
    rep.check("reference bracket certified", ref.certified, ref.width, "<= 1e-8 (1 + |inf phi|)")
    ratio, sol = tilting_tail_ratio(problem)
    rep.check("tilting Newton quadratic tail at x=0, mu=1", ratio <= 0.1, ratio, "<= 0.1")
    rep.summary["tilting_x0_mu1"] = {"newton_iters": sol.newton_iters, "residual": sol.residual,
                                     "residual_history": sol.residual_history}

    cells = [(cfg.seed, dc.n, dc.m, dc.alpha, dc.c, r, dc.t0, dc.T, dc.samples, ref.inf_phi, ref.x_star)
             for r in dc.r_values]
    diags = _run_cells(_dro_cell, cells, jobs)
    per_r = {}
    for r, d in zip(dc.r_values, diags):
        lab = _label(r)
        rep.diagnostics[lab] = d
        _trajectory_checks(rep, lab, d, dc.alpha, 5.0, ref.x_star)
        per_r[lab] = {"x_T": [float(v) for v in d.x[-1]], "sup_t2_abs_residual_tail": d.tail_sup("t2_abs_residual", 5.0),
                      "final_residual": float(d.residual[-1])}
    rep.summary["runs"] = per_r
    labels = list(rep.diagnostics)
    rep.plots["residuals"] = report.residual_plot(diags, labels, "DRO: residuals")
    series = []
    for lab, d in zip(labels, diags):
        for i in range(d.x.shape[1]):
            series.append(report.Series(f"{lab} x_{i + 1}", d.t, d.x[:, i], dashed=lab != labels[0]))
    rep.plots["trajectories"] = report.PlotSpec("DRO: trajectories", "t", "x_i(t)", series, xlog=True)
    return rep


# --------------------------------------------------------------------------- #
# Smoothing profiles
# --------------------------------------------------------------------------- #


def profile_problems():
    """The three 1-D illustrations: entropic and quadratic smoothing of max(x^2 + 1, e^x), and a box instance."""
    curved = CallableFamily((lambda x: x[0] ** 2 + 1.0, lambda x: math.exp(x[0])),
                            (lambda x: np.array([2.0 * x[0]]), lambda x: np.array([math.exp(x[0])])), 1)
    affine = CallableFamily((lambda x: x[0] - 1.0, lambda x: -0.5 * x[0] + 0.2),
                            (lambda x: np.array([1.0]), lambda x: np.array([-0.5])), 1,
                            lipschitz=np.zeros(2))
    box = Box(np.array([0.0, 0.2]), np.array([2.0, 1.5]))
    return {
        "entropic": SupProblem(curved, Simplex(2), KL.uniform(2)),
        "quadratic": SupProblem(curved, Simplex(2), QuadraticToCenter(np.array([0.5, 0.5]))),
        "box": SupProblem(affine, box, QuadraticToCenter(np.array([1.0, 0.25]))),
    }


def smooth_profile(cfg: Config | None = None):
    cfg = cfg or Config()
    pc = cfg.profile
    rep = BenchReport("profile")
    mus = sorted(pc.mus, reverse=True)
    for name, problem in profile_problems().items():
        lo, hi = (pc.box_x_min, pc.box_x_max) if name == "box" else (pc.x_min, pc.x_max)
        xs = np.linspace(lo, hi, pc.points)
        phi = np.array([sup_value(problem, [x]) for x in xs])
        vals = np.array([[reg_value(problem, [x], mu) for x in xs] for mu in mus])
        worst = 0.0
        for mu in mus:
            for x in xs[:: max(1, len(xs) // 101)]:
                worst = max(worst, sandwich_check(problem, [x], mu).violation)
        sandwich_ok = all(np.all(phi - v >= -1e-9) and np.all(phi - v <= problem.C * mu + 1e-9)
                          for v, mu in zip(vals, mus))
        rep.check(f"{name}: sandwich 0 <= phi - phi_mu <= C mu on grid", sandwich_ok and worst <= 1e-9, worst,
                  "slack 1e-9")
        chain = np.vstack([vals, phi[None, :]])
        mono = bool(np.all(np.diff(chain, axis=0) >= -1e-12))
        rep.check(f"{name}: phi_mu increases as mu decreases, below phi", mono,
                  float(np.min(np.diff(chain, axis=0))), ">= -1e-12")
        header = ["x", "phi"] + [f"phi_mu_{mu:g}" for mu in mus]
        rep.tables[name] = (header, [[x, p, *vals[:, i]] for i, (x, p) in enumerate(zip(xs, phi))])
        series = [report.Series("phi", xs, phi, color="#000000", width=2.2)]
        series += [report.Series(f"mu = {mu:g}", xs, v, dashed=True) for mu, v in zip(mus, vals)]
        rep.plots[name] = report.PlotSpec(f"{name} smoothing", "x", "value", series)
        rep.summary[name] = {"C": problem.C, "mus": mus}
    return rep
