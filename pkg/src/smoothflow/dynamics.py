"""Inertial dynamics with vanishing damping driven by phi_{mu(t)}, plus rate diagnostics.

    x'' + (alpha / t) x' + grad phi_{mu(t)}(x) = 0        (inertial)
    x'  = -grad phi_{mu(t)}(x)                            (first-order flow)

Problems only need ``evaluate(x, mu)`` returning an object with ``value``,
``grad`` and ``maximizer``, ``raw_value(x)`` and a supremum constant ``C``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45

from .errors import NotNonincreasing, StepUnderflow

RTOL = 1e-8
ATOL = 1e-10


# --------------------------------------------------------------------------- #
# Schedules
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class PowerSchedule:
    """mu(t) = c * t^(-r)."""

    c: float = 1.0
    r: float = 3.0

    def __post_init__(self):
        if self.c <= 0 or self.r <= 0:
            raise ValueError("power schedule needs c > 0 and r > 0")

    def mu(self, t):
        return self.c * np.power(np.asarray(t, dtype=float), -self.r)

    def mudot(self, t):
        return -self.r * self.c * np.power(np.asarray(t, dtype=float), -self.r - 1.0)

    @property
    def assumption_flags(self):
        return {
            "tmu_integrable": self.r > 2,
            "t2mudot_integrable": self.r > 2,
            "l1_integrable": self.r > 1,
        }


@dataclass(frozen=True)
class Schedule:
    """User schedule given by callables for mu and its derivative."""

    mu_fn: object
    mudot_fn: object

    def mu(self, t):
        return self.mu_fn(t)

    def mudot(self, t):
        return self.mudot_fn(t)

    @property
    def assumption_flags(self):
        # not decidable from closures; the numeric probes in schedule_check apply
        return {"tmu_integrable": None, "t2mudot_integrable": None, "l1_integrable": None}


@dataclass
class ScheduleReport:
    flags: dict
    probe_times: list
    t2mu: list
    t2mu_decreasing: bool | None
    nonincreasing: bool

    @property
    def assumption_ok(self):
        return bool(self.flags["tmu_integrable"] and self.flags["t2mudot_integrable"])


def schedule_check(schedule, t0=1.0, probes=(1e2, 1e4, 1e6)):
    """Integrability flags plus a numeric look at t^2 mu(t) on a probe grid."""
    grid = np.geomspace(t0, max(probes) * 10, 2000)
    md = np.array([schedule.mudot(t) for t in grid])
    mu = np.array([schedule.mu(t) for t in grid])
    if np.any(md > 0) or np.any(np.diff(mu) > 1e-15 * np.abs(mu[:-1])):
        raise NotNonincreasing("mu(t) increases somewhere on the probe grid")
    t2mu = [float(t * t * schedule.mu(t)) for t in probes]
    flags = dict(schedule.assumption_flags)
    both = flags["tmu_integrable"] and flags["t2mudot_integrable"]
    decreasing = bool(np.all(np.diff(t2mu) < 0)) if both else None
    return ScheduleReport(flags, list(probes), t2mu, decreasing, True)


# --------------------------------------------------------------------------- #
# Integration
# --------------------------------------------------------------------------- #


@dataclass
class Trajectory:
    kind: str  # "inertial" or "gradflow"
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    alpha: float | None
    t0: float
    nfev: int
    steps: int
    warnings: list = field(default_factory=list)

    @property
    def n(self):
        return self.x.shape[1]


def inertial_field(t, x, v, problem, schedule, alpha):
    """(x', x'') for the inertial system at time t."""
    g = problem.evaluate(x, schedule.mu(t)).grad
    return v, -(alpha / t) * v - g


def _sample_points(t0, T, samples):
    if samples is None:
        samples = 400
    if np.isscalar(samples):
        return np.geomspace(t0, T, int(samples))
    pts = np.sort(np.asarray(samples, dtype=float))
    if pts[0] < t0 or pts[-1] > T:
        raise ValueError("sample points must lie in [t0, T]")
    return pts


def _drive(fun, t0, y0, T, ts, rtol, atol, lipschitz_hint=None):
    """Step a Dormand-Prince 4(5) solver manually, reading dense output at ts."""
    solver = RK45(fun, t0, y0, T, rtol=rtol, atol=atol)
    out = np.empty((ts.size, y0.size))
    k = 0
    while k < ts.size and ts[k] <= t0:
        out[k] = y0
        k += 1
    steps = 0
    while solver.status == "running":
        solver.step()
        steps += 1
        # step_size is None when the very first step fails; h_abs is always set
        h = solver.step_size if solver.step_size is not None else solver.h_abs
        tiny = h < 1e-14 * solver.t and solver.t < T
        if solver.status == "failed" or tiny:
            est = lipschitz_hint(solver.t) if lipschitz_hint else float("nan")
            raise StepUnderflow(solver.t, h, est)
        if k < ts.size and ts[k] <= solver.t:
            dense = solver.dense_output()
            while k < ts.size and ts[k] <= solver.t:
                out[k] = y0 if ts[k] == t0 else dense(ts[k])
                k += 1
    out[k:] = solver.y
    return out, solver.nfev, steps


def integrate_inertial(problem, schedule, alpha, t0, T, x0, v0=None, samples=None,
                       rtol=RTOL, atol=ATOL, lipschitz_hint=None):
    """Integrate the inertial system on [t0, T] and sample it (400 log-spaced points by default)."""
    if not T > t0 > 0:
        raise ValueError("need T > t0 > 0")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.size
    v0 = np.zeros(n) if v0 is None else np.atleast_1d(np.asarray(v0, dtype=float))
    notes = []
    if alpha < 3:
        msg = f"alpha = {alpha} < 3: outside the regime covered by the decay estimates"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    ts = _sample_points(t0, T, samples)

    def fun(t, y):
        dx, dv = inertial_field(t, y[:n], y[n:], problem, schedule, alpha)
        return np.concatenate([dx, dv])

    ys, nfev, steps = _drive(fun, t0, np.concatenate([x0, v0]), T, ts, rtol, atol, lipschitz_hint)
    return Trajectory("inertial", ts, ys[:, :n], ys[:, n:], alpha, t0, nfev, steps, notes)


def integrate_gradflow(problem, schedule, t0, T, x0, samples=None, rtol=RTOL, atol=ATOL,
                       lipschitz_hint=None):
    """Integrate x' = -grad phi_{mu(t)}(x); velocities are recomputed at the samples."""
    if not T > t0 > 0:
        raise ValueError("need T > t0 > 0")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    ts = _sample_points(t0, T, samples)

    def fun(t, y):
        return -problem.evaluate(y, schedule.mu(t)).grad

    xs, nfev, steps = _drive(fun, t0, x0, T, ts, rtol, atol, lipschitz_hint)
    vs = np.array([fun(t, x) for t, x in zip(ts, xs)])
    return Trajectory("gradflow", ts, xs, vs, None, t0, nfev, steps, [])


# --------------------------------------------------------------------------- #
# Diagnostics
# --------------------------------------------------------------------------- #


@dataclass
class DiagnosticsRecord:
    t: float
    x: np.ndarray
    v: np.ndarray
    value_reg: float
    value_raw: float
    residual: float
    energy_E: float
    W: float
    t2_abs_residual: float
    t_speed: float
    t2_raw_gap: float


def tail_sup(t, y, lo, hi=math.inf):
    sel = (t >= lo) & (t <= hi)
    return float(np.max(y[sel])) if sel.any() else float("nan")


def dyadic_envelope(t, y, t_start, t_end):
    """Running max of y over consecutive dyadic windows [2^k t_start, 2^(k+1) t_start)."""
    edges = [t_start]
    while edges[-1] < t_end:
        edges.append(min(2 * edges[-1], t_end))
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        out.append((lo, hi, tail_sup(t, y, lo, hi)))
    return out


@dataclass
class Diagnostics:
    """Per-sample diagnostic columns and the trajectory-level summaries."""

    kind: str
    alpha: float | None
    C: float
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    mu: np.ndarray
    mudot: np.ndarray
    value_reg: np.ndarray
    value_raw: np.ndarray
    residual: np.ndarray
    energy_E: np.ndarray
    W: np.ndarray
    inf_phi: float
    x_star: np.ndarray | None
    schedule: object = None
    warnings: list = field(default_factory=list)

    @property
    def t2_abs_residual(self):
        return self.t ** 2 * np.abs(self.residual)

    @property
    def t_speed(self):
        return self.t * np.linalg.norm(self.v, axis=1)

    @property
    def t2_raw_gap(self):
        return self.t ** 2 * (self.value_raw - self.inf_phi)

    @property
    def t_raw_gap(self):
        return self.t * (self.value_raw - self.inf_phi)

    def records(self):
        t2r, ts, t2g = self.t2_abs_residual, self.t_speed, self.t2_raw_gap
        return [
            DiagnosticsRecord(float(self.t[i]), self.x[i], self.v[i], float(self.value_reg[i]),
                              float(self.value_raw[i]), float(self.residual[i]), float(self.energy_E[i]),
                              float(self.W[i]), float(t2r[i]), float(ts[i]), float(t2g[i]))
            for i in range(self.t.size)
        ]

    # --- summaries -------------------------------------------------------
    def tail_sup(self, column, lo, hi=math.inf):
        return tail_sup(self.t, np.asarray(getattr(self, column)), lo, hi)

    def envelope_ratio(self, column, early, late):
        """max over the early window divided by max over the late window."""
        y = np.asarray(getattr(self, column))
        return tail_sup(self.t, y, *early) / tail_sup(self.t, y, *late)

    def energy_derivative_check(self, tol_scale=1e-6):
        """Fraction of sample midpoints where the discrete energy slope obeys its bound."""
        if self.kind != "inertial" or self.x_star is None:
            return None
        a, C, t, E = self.alpha, self.C, self.t, self.energy_E
        tm = 0.5 * (t[1:] + t[:-1])
        mu_m = np.array([self.schedule.mu(s) for s in tm])
        md_m = np.array([self.schedule.mudot(s) for s in tm])
        bound = C * (a - 3) / (a - 1) ** 2 * tm * mu_m + C / (a - 1) ** 2 * tm ** 2 * np.abs(md_m)
        slope = np.diff(E) / np.diff(t)
        tol = tol_scale * (1.0 + np.maximum(np.abs(E[1:]), np.abs(E[:-1])))
        ok = slope <= bound + tol
        ok_relaxed = slope <= bound + 10 * tol
        return {
            "fraction": float(ok.mean()),
            "fraction_relaxed": float(ok_relaxed.mean()),
            "worst_excess": float(np.max(slope - bound - tol)),
        }

    def W_nonnegative(self, slack=1e-12):
        return float(np.mean(self.W >= -slack))

    def energy_lower_bound(self, slack=1e-12):
        if self.kind != "inertial" or self.x_star is None:
            return None
        lb = -self.C * self.t ** 2 * self.mu / (self.alpha - 1) ** 2
        return float(np.mean(self.energy_E >= lb - slack * (1 + np.abs(lb))))

    def gradflow_F_monotone(self, slack=1e-9):
        """F(t) = zeta + C mu nonincreasing along samples (first-order flow)."""
        F = self.residual + self.C * self.mu
        return float(np.mean(np.diff(F) <= slack * (1 + np.abs(F[:-1]))))


def diagnostics(traj, inf_phi, x_star, problem, schedule, alpha=None):
    """Evaluate value gaps, energy and W at every sample of a trajectory."""
    alpha = traj.alpha if alpha is None else alpha
    t = traj.t
    mu = np.array([schedule.mu(s) for s in t])
    mudot = np.array([schedule.mudot(s) for s in t])
    reg = np.empty(t.size)
    raw = np.empty(t.size)
    for i in range(t.size):
        reg[i] = problem.evaluate(traj.x[i], mu[i]).value
        raw[i] = problem.raw_value(traj.x[i])
    zeta = reg - inf_phi
    C = float(problem.C)
    W = 0.5 * np.sum(traj.v ** 2, axis=1) + zeta + C * mu
    if traj.kind == "inertial" and x_star is not None:
        vl = traj.x - np.asarray(x_star) + (t / (alpha - 1))[:, None] * traj.v
        E = 0.5 * np.sum(vl ** 2, axis=1) + t ** 2 / (alpha - 1) ** 2 * zeta
    else:
        E = np.full(t.size, np.nan)
    return Diagnostics(traj.kind, alpha, C, t, traj.x, traj.v, mu, mudot, reg, raw, zeta, E, W,
                       float(inf_phi), None if x_star is None else np.asarray(x_star, dtype=float),
                       schedule, list(traj.warnings))
