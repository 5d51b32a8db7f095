"""Smoothed supremum functions phi_mu(x) = max_{lam in Q} <lam, g(x)> - mu D(lam).

Closed forms are used for the catalogued (set, penalty) pairs; everything else
goes through an accelerated projected-gradient ascent on the strongly concave
dual objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_CONFIG, SolverConfig
from .errors import DualSolveFailed, MissingLipschitzData, UnsupportedPair
from .penalties import KL, KLPushforward, QuadraticToCenter, penalty_sup_C
from .sets import Box, LpBall, MomentPolytope, Simplex, VertexPolytope

TAGS = ("LogSumExpSimplex", "QuadProxSimplex", "QuadProxBox", "QuadProxLpBall", "VertexLogSumExp", "Generic")


def infer_tag(Q, D):
    if isinstance(D, KL):
        if isinstance(Q, Simplex):
            return "LogSumExpSimplex"
        if isinstance(Q, MomentPolytope):
            return "Generic"
    if isinstance(D, KLPushforward) and isinstance(Q, VertexPolytope):
        return "VertexLogSumExp"
    if isinstance(D, QuadraticToCenter):
        if isinstance(Q, Simplex):
            return "QuadProxSimplex"
        if isinstance(Q, Box):
            return "QuadProxBox"
        if isinstance(Q, LpBall):
            return "QuadProxLpBall"
    raise UnsupportedPair(f"({type(D).__name__}, {type(Q).__name__}) is not a supported pair")


def _in_nonnegative_orthant(Q):
    if isinstance(Q, LpBall):
        return False
    if isinstance(Q, VertexPolytope):
        return bool(Q.vertices.min() >= 0)
    return True  # simplex, box with lower >= 0, moment polytope over the simplex


@dataclass(frozen=True, eq=False)
class SupProblem:
    objectives: object
    set: object
    penalty: object
    config: SolverConfig = DEFAULT_CONFIG
    tag: str = field(init=False)
    C: float = field(init=False)
    sigma: float = field(init=False)

    def __post_init__(self):
        if self.objectives.m != self.set.dim:
            raise ValueError(f"{self.objectives.m} objectives but the set lives in R^{self.set.dim}")
        if isinstance(self.penalty, QuadraticToCenter) and not self.set.contains(self.penalty.center):
            raise ValueError("quadratic penalty center must lie in Q")
        object.__setattr__(self, "tag", infer_tag(self.set, self.penalty))
        object.__setattr__(self, "C", penalty_sup_C(self.penalty, self.set))
        if isinstance(self.penalty, KLPushforward):
            sigma = self.penalty.sigma_for(self.set.vertices)
        else:
            sigma = self.penalty.sigma
        object.__setattr__(self, "sigma", float(sigma))

    @property
    def standing_hypothesis(self):
        # Q in the nonnegative orthant is what makes phi and phi_mu convex in x
        return {
            "penalty_nonnegative": True,
            "penalty_inf_zero": True,
            "C_finite": math.isfinite(self.C),
            "set_nonnegative": _in_nonnegative_orthant(self.set),
        }

    # protocol consumed by the dynamics module
    def evaluate(self, x, mu, method="auto"):
        return evaluate(self, x, mu, method)

    def raw_value(self, x):
        return sup_value(self, x)

    def hessian(self, x, mu):
        """Exact Hessian of phi_mu for entropic smoothing on the simplex, else None."""
        if self.tag != "LogSumExpSimplex" or not hasattr(self.objectives, "hessians"):
            return None
        e = evaluate(self, x, mu)
        lam, J = e.maximizer, self.objectives.grads(x)
        cov = np.diag(lam) - np.outer(lam, lam)
        return np.einsum("k,kij->ij", lam, self.objectives.hessians(x)) + J.T @ cov @ J / mu


@dataclass
class DualCertificate:
    maximizer: np.ndarray
    vi_residual: float
    iterations: int
    method: str
    fixed_point_gap: float = 0.0
    vertex_weights: np.ndarray | None = None


@dataclass
class SmoothEval:
    """Everything computed at one (x, mu): phi_mu, its gradient and D(lam^mu)."""

    value: float
    grad: np.ndarray
    penalty: float
    certificate: DualCertificate
    g: np.ndarray

    @property
    def maximizer(self):
        return self.certificate.maximizer


# --------------------------------------------------------------------------- #
# Generic dual solver
# --------------------------------------------------------------------------- #


def _penalty_fast(D):
    if isinstance(D, KL):
        logv = np.log(D.prior)
        return (lambda lam: float(lam @ (np.log(lam) - logv)),
                lambda lam: 1.0 + np.log(lam) - logv,
                lambda lam: lam.min() > 0)
    return D.value, D.grad, lambda lam: True


def _affine_hull(Q):
    if isinstance(Q, Simplex):
        return np.ones((1, Q.dim)), np.ones(1)
    if isinstance(Q, MomentPolytope) and Q.strict_witness is not None:
        return Q.equality_matrix
    return None


def _kl_affine_newton(g, E, f, logv, mu, lam, max_iter=200):
    """Primal Newton for max <lam, g> - mu KL(lam) on {E lam = f, lam > 0}.

    The maximizer is strictly positive, so only the equality constraints are
    active; a fraction-to-boundary rule keeps iterates positive. Affine
    invariance makes it insensitive to tiny coordinates, which stall
    Euclidean first-order steps (curvature mu / lam_i).
    """
    value = lambda p: float(p @ g) - mu * float(p @ (np.log(p) - logv))  # noqa: E731
    for _ in range(max_iter):
        grad = g - mu * (1.0 + np.log(lam) - logv)
        hinv = lam / mu
        M = (E * hinv) @ E.T
        w = np.linalg.lstsq(M, E @ (hinv * grad), rcond=None)[0]
        step = hinv * (grad - E.T @ w)
        dec2 = float(step @ (grad - E.T @ w))
        ratio = step / lam
        if not np.all(np.isfinite(step)):
            return None
        s = 1.0 if ratio.min() > -0.99 else -0.99 / ratio.min()
        if dec2 > 1e-12:
            h0 = value(lam)
            while value(lam + s * step) < h0 + 0.25 * s * dec2 and s > 1e-12:
                s *= 0.5
        lam = lam + s * step
        if s == 1.0 and np.abs(ratio).max() <= 1e-14:
            break
    return lam


def solve_dual_generic(g, Q, D, mu, config=DEFAULT_CONFIG, start=None, sigma=None):
    """Maximize <lam, g> - mu D(lam) over Q by accelerated projected gradient.

    Backtracking keeps KL iterates strictly inside the simplex, so the KL
    gradient is never requested on the boundary. For KL on a set with a
    strictly positive point, a primal Newton pass on the affine hull runs
    first and is kept if it passes the certificate. Stops once both the
    fixed-point gap and the Frank-Wolfe (variational inequality) gap are
    below the configured tolerances.
    """
    g = np.asarray(g, dtype=float)
    Dval, Dgrad, inside = _penalty_fast(D)
    sigma = D.sigma if sigma is None else sigma
    dh = lambda lam: g - mu * Dgrad(lam)  # noqa: E731
    tau = 1.0 / (mu * sigma)

    def certify(lam, gz, it):
        probe = lam + tau * gz
        fp = float(np.linalg.norm(lam - Q.project(probe, start=lam)))
        # projections are accurate relative to the size of their input
        if fp <= config.fixed_point_tol * max(1.0, float(np.abs(probe).max())):
            vi = Q.linear_max(gz)[0] - float(gz @ lam)
            if vi <= config.vi_tol:
                return DualCertificate(lam, vi, it, "generic", fixed_point_gap=fp)
        return fp

    hull = _affine_hull(Q) if isinstance(D, KL) else None
    if hull is not None:
        lam0 = np.asarray(start, dtype=float) if start is not None and inside(np.asarray(start)) \
            else Q.interior_point()
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            lam_n = _kl_affine_newton(g, *hull, np.log(D.prior), mu, lam0)
        if lam_n is not None and inside(lam_n):
            cert = certify(lam_n, dh(lam_n), 0)
            if isinstance(cert, DualCertificate):
                return cert
            start = lam_n

    if start is not None:
        lam = np.asarray(start, dtype=float)
    elif isinstance(D, QuadraticToCenter):
        lam = D.center.copy()
    else:
        lam = Q.interior_point()
    base_L = mu * sigma
    L = base_L
    y, t = lam.copy(), 1.0
    fp = vi = math.inf
    for it in range(1, config.max_dual_iter + 1):
        gy = dh(y)
        while True:
            z = Q.project(y + gy / L, start=lam)
            if inside(z):
                d = z - y
                gz = dh(z)
                # local curvature test on the gradient; immune to value cancellation
                if np.linalg.norm(gz - gy) <= L * np.linalg.norm(d) or not d.any():
                    break
            L /= config.backtrack_factor
        if (z - y) @ (z - lam) < 0:
            y, t = lam.copy(), 1.0
            continue
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y_next = z + ((t - 1.0) / t_next) * (z - lam)
        if not inside(y_next):
            y_next, t_next = z.copy(), 1.0
        lam, y, t = z, y_next, t_next
        L = max(base_L, 0.9 * L)

        cert = certify(lam, gz, it)
        if isinstance(cert, DualCertificate):
            return cert
        fp = cert
    raise DualSolveFailed(f"no convergence after {config.max_dual_iter} iterations (fixed-point gap {fp:.2e})")


# --------------------------------------------------------------------------- #
# Closed forms
# --------------------------------------------------------------------------- #


def _softmax_kl(z, logv):
    """Softmax of z with the KL of the result against exp(logv), in log domain."""
    # normalize after shifting by the max: exp(z - lse) drifts off the simplex
    # by O(eps * |z|) once |z| ~ g / mu is large
    zmax = float(np.max(z))
    e = np.exp(z - zmax)
    s = float(e.sum())
    w = e / s
    logw = (z - zmax) - math.log(s)
    return w, float(w @ (logw - logv)), zmax + math.log(s)


def _from_values(problem, g, mu, method="auto", start=None):
    """(phi_mu, D(lam^mu), certificate) from objective values g."""
    if mu <= 0:
        raise ValueError("smoothing parameter mu must be positive")
    Q, D, tag = problem.set, problem.penalty, problem.tag
    if method == "generic" or tag == "Generic":
        if isinstance(D, KLPushforward):
            raise UnsupportedPair("pushforward KL has no generic dual solver")
        cert = solve_dual_generic(g, Q, D, mu, problem.config, start=start, sigma=problem.sigma)
        lam = cert.maximizer
        pen = D.value(lam) if not isinstance(D, KL) else _penalty_fast(D)[0](lam)
        return float(g @ lam) - mu * pen, pen, cert
    if tag == "LogSumExpSimplex":
        logv = np.log(D.prior)
        lam, pen, lse = _softmax_kl(g / mu + logv, logv)
        return mu * lse, pen, DualCertificate(lam, 0.0, 0, "closed-form")
    if tag == "VertexLogSumExp":
        logv = np.log(D.prior)
        scores = Q.vertices @ g
        alpha, pen, lse = _softmax_kl(scores / mu + logv, logv)
        lam = alpha @ Q.vertices
        return mu * lse, pen, DualCertificate(lam, 0.0, 0, "closed-form", vertex_weights=alpha)
    # quadratic prox variants: lam = P_Q(c + g/mu)
    c = D.center
    lam = Q.project(c + g / mu)
    pen = D.value(lam)
    return float(g @ lam) - mu * pen, pen, DualCertificate(lam, 0.0, 0, "closed-form")


def evaluate(problem, x, mu, method="auto"):
    g, grads = problem.objectives.values_and_grads(x)
    value, pen, cert = _from_values(problem, g, mu, method)
    return SmoothEval(value, cert.maximizer @ grads, pen, cert, g)


def sup_value(problem, x):
    """phi(x) = max over Q of <lam, g(x)>, exact for every set variant."""
    return problem.set.linear_max(problem.objectives.values(x))[0]


def reg_value(problem, x, mu, method="auto"):
    return _from_values(problem, problem.objectives.values(x), mu, method)[0]


def reg_maximizer(problem, x, mu, method="auto"):
    return _from_values(problem, problem.objectives.values(x), mu, method)[2]


def reg_grad(problem, x, mu, method="auto"):
    return evaluate(problem, x, mu, method).grad


def reg_dmu(problem, x, mu, method="auto"):
    """d phi_mu / d mu = -D(lam^mu(x))."""
    return -_from_values(problem, problem.objectives.values(x), mu, method)[1]


def quad_prox_formula(g, Q, center, mu):
    """<g, c> + ||g||^2/(2 mu) - (mu/2) dist_Q^2(c + g/mu), as written for the prox forms.

    Suffers cancellation for small mu; ``reg_value`` evaluates the same
    quantity as <lam, g> - mu D(lam) instead.
    """
    g = np.asarray(g, dtype=float)
    w = center + g / mu
    dist2 = float(np.sum((w - Q.project(w)) ** 2))
    return float(g @ center) + float(g @ g) / (2.0 * mu) - 0.5 * mu * dist2


def lipschitz_bound(problem, center, radius, mu):
    """M_Q L_g + G_B^2 / (mu sigma) on the ball B(center, radius)."""
    fam = problem.objectives
    L = getattr(fam, "lipschitz", None)
    if L is None:
        raise MissingLipschitzData("objective family has no per-component Lipschitz constants")
    G = np.asarray(fam.grad_bound(center, radius), dtype=float)
    return problem.set.support_radius() * float(np.sum(L)) + float(G @ G) / (mu * problem.sigma)


@dataclass
class SandwichReport:
    phi: float
    phi_mu: float
    bound: float
    gap: float
    passed: bool
    violation: float


def sandwich_check(problem, x, mu, slack=1e-9):
    """0 <= phi - phi_mu <= C mu, reported rather than raised."""
    phi = sup_value(problem, x)
    phi_mu = reg_value(problem, x, mu)
    gap = phi - phi_mu
    bound = problem.C * mu
    violation = max(0.0, -gap, gap - bound)
    return SandwichReport(phi, phi_mu, bound, gap, violation <= slack, violation)
