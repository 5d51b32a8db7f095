"""KL-regularized distributionally robust evaluation over moment-constrained sets.

The worst-case distribution is an exponential tilt of the prior,
p_i ~ v_i exp((f_i - (A^T theta)_i) / mu), with theta fixed by A p = b. The
multipliers are found by damped Newton on the smooth convex dual

    psi(theta) = mu * log sum_i v_i exp((f_i - (A^T theta)_i) / mu) + <theta, b>,

whose gradient is b - A p(theta) and Hessian (1/mu) A Cov(p) A^T.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, xlogy

from .config import DEFAULT_CONFIG
from .errors import NewtonStalled, NoStrictWitness
from .objectives import QuadraticFamily
from .penalties import KL
from .sets import MomentPolytope

AmbiguitySet = MomentPolytope

BENCH_A = np.array([[1.0, -1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, -1.0, 0.0, 0.0, 0.0]])
BENCH_B = np.zeros(2)

# largest moment residual ever accepted from the rounding-floor exemption
FLOOR_CAP = 1e-6
# Newton steps allowed without halving the residual before falling back to continuation
STALL_WINDOW = 8


@dataclass
class TiltingSolution:
    p: np.ndarray
    theta: np.ndarray
    log_normalizer: float
    newton_iters: int
    residual: float
    residual_history: list = field(default_factory=list)
    # log p stays finite when p_i underflows to 0 at small mu
    log_p: np.ndarray | None = None


def _tilt(f, At, theta, mu, logv):
    # line-search trials may overflow; the non-finite result is then rejected
    with np.errstate(over="ignore", invalid="ignore"):
        z = (f - At @ theta) / mu + logv
        lse = logsumexp(z)
        p = np.exp(z - lse)
        return p / p.sum(), lse


def solve_tilting(f, aset, mu, prior=None, theta0=None, config=DEFAULT_CONFIG):
    """Worst-case tilted distribution p^mu and moment multipliers theta^mu.

    Damped Newton from ``theta0`` (zero by default). If that stalls, which
    happens for tiny mu when the start puts almost all mass on one scenario,
    the solve is repeated along a decreasing path of regularization levels
    starting at the spread of f, each stage warm-started from the previous
    multipliers.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if aset.strict_witness is None:
        raise NoStrictWitness("ambiguity set has no strictly positive feasible point")
    f = np.asarray(f, dtype=float)
    m = aset.dim
    logv = np.log(np.full(m, 1.0 / m) if prior is None else np.asarray(prior, dtype=float))
    kept = aset.kept_rows
    theta = np.zeros(len(kept))
    if theta0 is not None:
        theta = np.asarray(theta0, dtype=float)[kept].copy()
    try:
        return _newton_tilt(f, aset, mu, logv, theta, config)
    except NewtonStalled:
        pass
    if theta0 is not None:
        # short continuation from the warm start first, then the full one from zero
        try:
            return _continuation(f, aset, mu, logv, theta, config, 1e3 * mu)
        except NewtonStalled:
            pass
    return _continuation(f, aset, mu, logv, np.zeros(len(kept)), config, max(float(np.ptp(f)), 1.0))


def _continuation(f, aset, mu, logv, theta, config, level):
    """Follow the tilting path from ``level`` down to mu.

    Each stage is warm-started from the previous multipliers. A stage that
    stalls is retried with a smaller reduction factor; the factor grows back
    after every success.
    """
    kept = aset.kept_rows
    level = max(level, mu)
    sol = _newton_tilt(f, aset, level, logv, theta, config)
    total = sol.newton_iters
    factor = 10.0
    while level > mu:
        nxt = max(level / factor, mu)
        try:
            sol = _newton_tilt(f, aset, nxt, logv, sol.theta[kept], config)
        except NewtonStalled:
            factor = np.sqrt(factor)
            if factor < 1.01:
                raise
            continue
        total += sol.newton_iters
        level = nxt
        factor = min(factor * factor, 10.0)
    sol.newton_iters = total
    return sol


def _polish(p, log_p, aset, resid):
    """Remove a rounding-level moment residual by one step in log p.

    When mu is tiny and theta large, the exponents lose digits to cancellation
    and no theta reproduces A p = b to full precision. A first-order tilt
    p * (1 - Abar^T y), with Abar = [A; 1], solves the linearized moment
    equations directly in p-space, where no cancellation occurs. The result
    differs from the exact tilt by O(resid^2). Kept only if it helps.
    """
    Abar = np.vstack([aset.A, np.ones(p.size)])
    target = np.concatenate([aset.b, [1.0]])
    M = (Abar * p) @ Abar.T
    y = np.linalg.lstsq(M, Abar @ p - target, rcond=None)[0]
    step = Abar.T @ y
    if not np.all(np.isfinite(step)) or np.abs(step[p > 0]).max() >= 0.5:
        return p, log_p, resid
    q = p * (1.0 - step)
    r = float(np.abs(aset.A @ q - aset.b).max(initial=0.0))
    if r >= resid or abs(q.sum() - 1.0) > 1e-12:
        return p, log_p, resid
    return q, log_p + np.log1p(-step), r


def _newton_tilt(f, aset, mu, logv, theta, config):
    kept = aset.kept_rows
    A, b = aset.A[kept], aset.b[kept]
    At = A.T

    def full_theta(th):
        out = np.zeros(aset.A.shape[0])
        out[kept] = th
        return out

    def psi(p_lse, th):
        return mu * p_lse + th @ b

    p, lse = _tilt(f, At, theta, mu, logv)
    history = []
    for it in range(config.max_newton_iter + 1):
        resid_vec = aset.A @ p - aset.b
        resid = float(np.abs(resid_vec).max(initial=0.0))
        history.append(resid)
        # exponent i carries absolute error ~ eps (|f_i| + |(A^T theta)_i|) / mu,
        # moving p_i by that much relative to itself; this bounds the attainable
        # residual once mu is tiny. Never excuse more than FLOOR_CAP.
        shift = At @ theta
        scale = float(np.max(p * (np.abs(f) + np.abs(shift)))) * float(np.abs(A).max(initial=0.0))
        floor = min(64 * np.finfo(float).eps * scale / mu, FLOOR_CAP)
        # the floor only excuses a residual once Newton has stopped improving it
        stagnant = len(history) >= 2 and resid > 0.5 * history[-2]
        if resid <= config.tilting_tol or (resid <= floor and stagnant):
            log_p = (f - shift) / mu + logv - lse
            if resid > config.tilting_tol:
                p, log_p, resid = _polish(p, log_p, aset, resid)
                history.append(resid)
            return TiltingSolution(p, full_theta(theta), float(lse), it, resid, history, log_p)
        if it == config.max_newton_iter:
            break
        if it >= STALL_WINDOW and resid > 0.5 * min(history[:-STALL_WINDOW]):
            raise NewtonStalled(f"residual {resid:.3e} not halved in {STALL_WINDOW} Newton steps")
        grad = b - A @ p
        Ap = A * p
        H = (Ap @ A.T - np.outer(A @ p, A @ p)) / mu
        try:
            step = -np.linalg.solve(H, grad)
            if not np.all(np.isfinite(step)) or np.linalg.cond(H) > 1.0 / config.rank_tol:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = -mu * grad
        psi0 = psi(lse, theta)
        slope = float(grad @ step)
        s = 1.0
        for _ in range(60):
            th_new = theta + s * step
            p_new, lse_new = _tilt(f, At, th_new, mu, logv)
            r_new = np.abs(A @ p_new - b).max(initial=0.0)
            armijo = psi(lse_new, th_new) <= psi0 + config.armijo_slope * s * slope
            if armijo or r_new < np.abs(grad).max():
                break
            s *= 0.5
        else:
            raise NewtonStalled(f"line search failed at residual {resid:.3e}")
        theta, p, lse = th_new, p_new, lse_new
    raise NewtonStalled(f"residual {history[-1]:.3e} after {config.max_newton_iter} Newton steps")


def tilted_value(f, sol, mu, prior=None):
    """sum p_i f_i - mu KL(p || prior)."""
    m = sol.p.size
    logv = np.log(np.full(m, 1.0 / m) if prior is None else np.asarray(prior, dtype=float))
    p = sol.p
    kl = float(np.sum(xlogy(p, p)) - p @ logv)
    return float(p @ f) - mu * kl, kl


def dro_reg_value(x, costs, aset, mu, prior=None, theta0=None):
    f = costs.values(x)
    sol = solve_tilting(f, aset, mu, prior, theta0)
    return tilted_value(f, sol, mu, prior)[0]


def dro_reg_grad(x, costs, aset, mu, prior=None, theta0=None):
    f, grads = costs.values_and_grads(x)
    sol = solve_tilting(f, aset, mu, prior, theta0)
    return sol.p @ grads


@dataclass
class DROEval:
    value: float
    grad: np.ndarray
    penalty: float
    tilting: TiltingSolution
    g: np.ndarray

    @property
    def maximizer(self):
        return self.tilting.p


class DROProblem:
    """Smoothed DRO objective usable by the dynamics module.

    Holds a warm-start cache for theta, so one instance must be owned by a
    single trajectory at a time; use ``fresh()`` to get an independent copy.
    """

    def __init__(self, costs, aset, prior=None):
        if aset.strict_witness is None:
            raise NoStrictWitness("ambiguity set has no strictly positive feasible point")
        self.objectives = costs
        self.set = aset
        self.prior = np.full(aset.dim, 1.0 / aset.dim) if prior is None else np.asarray(prior, dtype=float)
        self.penalty = KL(self.prior)
        self.C = float(-np.log(self.prior.min()))
        self.sigma = 1.0
        self._last = None  # (f, p, theta) of the previous solve

    def fresh(self):
        return DROProblem(self.objectives, self.set, self.prior)

    def _predict_theta(self, f):
        """First-order warm start: d theta = (A Cov A^T)^-1 A Cov df, from A p(theta, f) = b."""
        if self._last is None:
            return None
        f_prev, p, theta = self._last
        kept = self.set.kept_rows
        A = self.set.A[kept]
        cov = np.diag(p) - np.outer(p, p)
        K = A @ cov
        G = K @ A.T
        if not len(kept) or np.linalg.cond(G) > 1e10:
            return theta
        out = theta.copy()
        out[kept] += np.linalg.solve(G, K @ (f - f_prev))
        return out

    def evaluate(self, x, mu, method="auto"):
        f, grads = self.objectives.values_and_grads(x)
        sol = solve_tilting(f, self.set, mu, self.prior, self._predict_theta(f))
        self._last = (f, sol.p, sol.theta)
        value, kl = tilted_value(f, sol, mu, self.prior)
        return DROEval(value, sol.p @ grads, kl, sol, f)

    def raw_value(self, x):
        return self.set.linear_max(self.objectives.values(x))[0]

    def hessian(self, x, mu):
        """sum p_i H_i + J^T dp/df J with dp/df the constrained covariance over mu."""
        e = self.evaluate(x, mu)
        p, J = e.tilting.p, self.objectives.grads(x)
        cov = np.diag(p) - np.outer(p, p)
        A = self.set.A[self.set.kept_rows]
        if A.shape[0]:
            K = A @ cov
            cov = cov - K.T @ np.linalg.pinv(K @ A.T, rcond=1e-12) @ K
        return np.einsum("k,kij->ij", p, self.objectives.hessians(x)) + J.T @ cov @ J / mu


def make_dro_benchmark(seed=2, n=5, m=6, A=None, b=None):
    """Random quadratic scenario costs with the two-row moment constraint set.

    Draw order: diagonal scalings s_i ~ U[1/2, 2]^n, centers d_i ~ N(0, I_n),
    offsets e_i ~ U[-0.2, 0.2], all from ``numpy.random.default_rng(seed)``.
    """
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.5, 2.0, size=(m, n))
    d = rng.standard_normal((m, n))
    e = rng.uniform(-0.2, 0.2, size=m)
    costs = QuadraticFamily.diagonal(s, d, e)
    if A is None:
        if m != 6:
            raise ValueError("the default moment constraints are defined for m = 6")
        A, b = BENCH_A, BENCH_B
    return costs, MomentPolytope(A, b)
