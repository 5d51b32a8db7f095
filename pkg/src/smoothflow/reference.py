"""Reference optimal values inf phi from two independent routes.

Route (a) minimizes the smoothed surrogate phi_mu by damped Newton with a
decreasing mu sequence ending at mu = 1e-6. Route (b) never smooths: it
minimizes phi directly through its epigraph over the vertices of Q (or by a
derivative-free search when Q has no finite vertex list), seeded from a
dense grid when n <= 2.

The bracket combines an upper bound (best phi value found) with a lower bound
from weak duality, min_x sum_i lam_i g_i(x) <= inf phi for any lam in Q with
lam >= 0, using the route-(a) maximizer as lam.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import OracleDisagreement
from .sets import Box, LpBall, MomentPolytope, Simplex, VertexPolytope


@dataclass
class ReferenceSolution:
    inf_phi: float
    x_star: np.ndarray
    method: str
    bracket: tuple
    details: dict = field(default_factory=dict)

    @property
    def width(self):
        return self.bracket[1] - self.bracket[0]

    @property
    def certified(self):
        return self.width <= 1e-8 * (1.0 + abs(self.inf_phi))


def set_vertices(Q):
    """Finite vertex list of Q, or None (Euclidean ball)."""
    if isinstance(Q, Simplex):
        return np.eye(Q.dim)
    if isinstance(Q, Box):
        if Q.dim > 12:
            return None
        return np.array([np.where(bits, Q.upper, Q.lower) for bits in itertools.product([0, 1], repeat=Q.dim)],
                        dtype=float)
    if isinstance(Q, LpBall):
        if Q.p == 1:
            return np.vstack([np.eye(Q.m), -np.eye(Q.m)])
        if Q.p == np.inf and Q.m <= 12:
            return np.array(list(itertools.product([-1.0, 1.0], repeat=Q.m)))
        return None
    if isinstance(Q, (VertexPolytope, MomentPolytope)):
        return np.asarray(Q.vertices, dtype=float)
    return None


# --------------------------------------------------------------------------- #
# route (a): smoothing descent
# --------------------------------------------------------------------------- #


def _fd_hessian(problem, x, mu, h):
    n = x.size
    H = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        H[:, j] = (problem.evaluate(x + e, mu).grad - problem.evaluate(x - e, mu).grad) / (2 * h)
    return _clip_pd(H)


def _clip_pd(H):
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    floor = max(1e-12 * max(w.max(), 1.0), 1e-12)
    return (V * np.maximum(w, floor)) @ V.T


def _newton(problem, x, mu, grad_tol, max_iter=100):
    e = problem.evaluate(x, mu)
    stall = 0
    best = np.linalg.norm(e.grad)
    for it in range(max_iter):
        gn = np.linalg.norm(e.grad)
        if gn <= grad_tol:
            break
        H = problem.hessian(x, mu) if hasattr(problem, "hessian") else None
        if H is None:
            H = _fd_hessian(problem, x, mu, 1e-3 * min(1.0, mu))
        else:
            H = _clip_pd(H)
        d = -np.linalg.solve(H, e.grad)
        slope = float(e.grad @ d)
        if -0.5 * slope <= 1e-15 * (1.0 + abs(e.value)):
            break  # predicted decrease below value resolution
        s = 1.0
        for _ in range(50):
            cand = problem.evaluate(x + s * d, mu)
            slack = 1e-15 * max(1.0, abs(e.value))
            if cand.value <= e.value + 1e-4 * s * slope + slack:
                break
            s *= 0.5
        else:
            break
        x, e = x + s * d, cand
        gn_new = np.linalg.norm(e.grad)
        stall = stall + 1 if gn_new >= 0.5 * best else 0
        best = min(best, gn_new)
        if stall >= 5:
            break
    return x, e


def smoothing_descent(problem, x0, mu_final=1e-6, grad_tol=1e-10):
    """Minimize phi_mu over a decreasing mu sequence; returns (x, eval at mu_final)."""
    x = np.asarray(x0, dtype=float)
    mu = 1.0
    while True:
        mu = max(mu, mu_final)
        x, e = _newton(problem, x, mu, grad_tol)
        if mu <= mu_final:
            return x, e
        mu /= 10.0


# --------------------------------------------------------------------------- #
# route (b): direct minimization of phi
# --------------------------------------------------------------------------- #


def _default_box(problem, n):
    centers = getattr(problem.objectives, "centers", None)
    if centers is not None:
        return centers.min(axis=0) - 1.0, centers.max(axis=0) + 1.0
    return np.full(n, -5.0), np.full(n, 5.0)


def _grid_start(problem, lo, hi):
    n = lo.size
    res = 401 if n == 1 else 201
    axes = [np.linspace(lo[i], hi[i], res) for i in range(n)]
    best, arg = np.inf, None
    for pt in itertools.product(*axes):
        v = problem.raw_value(np.array(pt))
        if v < best:
            best, arg = v, np.array(pt)
    return arg


def direct_minimize(problem, n, box=None, seed=0, starts=4):
    """Minimize phi without smoothing. Returns (x, phi(x), method)."""
    lo, hi = box if box is not None else _default_box(problem, n)
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    rng = np.random.default_rng(seed)
    if n <= 2:
        x_starts = [_grid_start(problem, lo, hi)]
        method = "grid+"
    else:
        x_starts = [0.5 * (lo + hi)] + [rng.uniform(lo, hi) for _ in range(starts - 1)]
        method = "multistart+"
    V = set_vertices(problem.set)
    fam = problem.objectives
    best_x, best_v = None, np.inf
    for xs in x_starts:
        if V is not None:
            # epigraph: min s  s.t.  <a_k, g(x)> <= s for every vertex a_k
            def cons(z):
                return z[-1] - V @ fam.values(z[:-1])

            def cons_jac(z):
                J = -(V @ fam.grads(z[:-1]))
                return np.hstack([J, np.ones((V.shape[0], 1))])

            z0 = np.append(xs, problem.raw_value(xs))
            sol = minimize(lambda z: z[-1], z0, jac=lambda z: np.eye(z.size)[-1], method="SLSQP",
                           constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
                           options={"ftol": 1e-16, "maxiter": 1000})
            x = sol.x[:-1]
            tag = "epigraph-SLSQP"
        else:
            sol = minimize(problem.raw_value, xs, method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 40000, "maxfev": 80000})
            x = sol.x
            tag = "Nelder-Mead"
        v = problem.raw_value(x)
        if v < best_v:
            best_x, best_v = x, v
    return best_x, best_v, method + tag


def _dual_lower_bound(problem, lam):
    """min_x sum lam_i g_i(x) for a feasible nonnegative lam, when computable exactly."""
    fam = problem.objectives
    if not hasattr(fam, "weighted_argmin"):
        return None
    lam = problem.set.project(np.asarray(lam, dtype=float))
    if np.any(lam < 0):
        return None
    H = np.einsum("k,kij->ij", lam, fam.matrices)
    if np.linalg.eigvalsh(H)[0] <= 1e-12:
        return None
    return fam.weighted_argmin(lam)[1]


def reference_solve(problem, x0=None, box=None, mu_final=1e-6, seed=0):
    n = problem.objectives.n
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    xa, ea = smoothing_descent(problem, x0, mu_final)
    ub_a = problem.raw_value(xa)
    xb, ub_b, method_b = direct_minimize(problem, n, box, seed)

    C = float(problem.C)
    tol = 1e-8 * (1.0 + abs(min(ub_a, ub_b)))
    lb = _dual_lower_bound(problem, ea.maximizer)
    if lb is None:
        lb = ea.value  # phi_mu at (near) the minimizer of phi_mu
        lb_kind = "smoothed value"
    else:
        lb_kind = "weak duality"
    upper = min(ub_a, ub_b)
    details = {
        "route_a_value": float(ub_a), "route_a_x": xa.tolist(), "route_a_grad_norm": float(np.linalg.norm(ea.grad)),
        "route_a_smoothed": float(ea.value), "route_b_value": float(ub_b), "route_b_x": xb.tolist(),
        "route_b_method": method_b, "lower_bound_kind": lb_kind, "mu_final": mu_final,
    }
    if abs(ub_a - ub_b) > C * mu_final + tol or lb > upper + tol:
        raise OracleDisagreement(float(ub_a), float(ub_b), details)
    x_star = xa if ub_a <= ub_b else xb
    lower = min(lb, upper)
    return ReferenceSolution(float(upper), x_star, f"smoothing-newton | {method_b}", (float(lower), float(upper)),
                             details)
