"""Compact convex dual domains Q and their Euclidean projections.

Every set exposes the same small surface used by the smoothing and DRO code:
``project``, ``linear_max`` (exact support function with a maximizer),
``support_radius`` (sup of the l1 norm), ``contains``, ``sample`` and an
``interior_point`` used to seed iterative solvers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .config import DEFAULT_CONFIG
from .errors import Infeasible

# --------------------------------------------------------------------------- #
# Closed-form projections
# --------------------------------------------------------------------------- #


def project_simplex(y):
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("project_simplex expects a non-empty 1-D vector")
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, y.size + 1)
    rho = k[u - css / k > 0][-1]
    tau = css[rho - 1] / rho
    return np.maximum(y - tau, 0.0)


def project_box(y, lower, upper):
    y = np.asarray(y, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if not (y.shape == lower.shape == upper.shape):
        raise ValueError(f"dimension mismatch: y{y.shape}, lower{lower.shape}, upper{upper.shape}")
    if np.any(lower > upper):
        raise ValueError("box requires lower <= upper componentwise")
    return np.minimum(np.maximum(y, lower), upper)


def _normalize_p(p):
    if p in (1, 2):
        return int(p)
    if p == math.inf or (isinstance(p, str) and p.lower() in ("inf", "infinity")):
        return math.inf
    raise ValueError(f"unsupported l_p ball exponent {p!r}; only 1, 2 and inf are implemented")


def project_lp_ball(y, p):
    """Projection onto the unit l_p ball for p in {1, 2, inf}."""
    p = _normalize_p(p)
    y = np.asarray(y, dtype=float)
    if p == 2:
        nrm = np.linalg.norm(y)
        return y / nrm if nrm > 1.0 else y.copy()
    if p == math.inf:
        return np.clip(y, -1.0, 1.0)
    if np.abs(y).sum() <= 1.0:
        return y.copy()
    return np.sign(y) * project_simplex(np.abs(y))


def dual_exponent(p):
    p = _normalize_p(p)
    return {1: math.inf, 2: 2, math.inf: 1}[p]


# --------------------------------------------------------------------------- #
# Set variants
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class Simplex:
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("simplex dimension must be positive")

    @property
    def dim(self):
        return self.m

    def project(self, y, start=None):
        return project_simplex(y)

    def linear_max(self, c):
        c = np.asarray(c, dtype=float)
        i = int(np.argmax(c))
        return float(c[i]), np.eye(self.m)[i]

    def support_radius(self):
        return 1.0

    def support_point(self):
        return np.eye(self.m)[0]

    def contains(self, lam, tol=DEFAULT_CONFIG.feasibility_slack):
        lam = np.asarray(lam, dtype=float)
        return lam.shape == (self.m,) and lam.min() >= -tol and abs(lam.sum() - 1.0) <= tol

    def interior_point(self):
        return np.full(self.m, 1.0 / self.m)

    def sample(self, rng, k):
        return rng.dirichlet(np.ones(self.m), size=k)


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D vectors of equal length")
        if np.any(lo < 0) or np.any(lo > hi):
            raise ValueError("box requires 0 <= lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.size

    def project(self, y, start=None):
        return project_box(y, self.lower, self.upper)

    def linear_max(self, c):
        c = np.asarray(c, dtype=float)
        pt = np.where(c > 0, self.upper, self.lower)
        return float(c @ pt), pt

    def support_radius(self):
        return float(self.upper.sum())

    def support_point(self):
        return self.upper.copy()

    def contains(self, lam, tol=DEFAULT_CONFIG.feasibility_slack):
        lam = np.asarray(lam, dtype=float)
        return bool(np.all(lam >= self.lower - tol) and np.all(lam <= self.upper + tol))

    def interior_point(self):
        return 0.5 * (self.lower + self.upper)

    def sample(self, rng, k):
        return self.lower + rng.random((k, self.dim)) * (self.upper - self.lower)


@dataclass(frozen=True, eq=False)
class LpBall:
    m: int
    p: float = 2

    def __post_init__(self):
        object.__setattr__(self, "p", _normalize_p(self.p))

    @property
    def dim(self):
        return self.m

    def project(self, y, start=None):
        return project_lp_ball(y, self.p)

    def linear_max(self, c):
        c = np.asarray(c, dtype=float)
        if self.p == 2:
            nrm = np.linalg.norm(c)
            pt = c / nrm if nrm > 0 else np.zeros_like(c)
            return float(nrm), pt
        if self.p == math.inf:
            pt = np.sign(c)
            return float(np.abs(c).sum()), pt
        i = int(np.argmax(np.abs(c)))
        pt = np.zeros_like(c)
        pt[i] = 1.0 if c[i] >= 0 else -1.0
        return float(abs(c[i])), pt

    def support_radius(self):
        if self.p == math.inf:
            return float(self.m)
        return float(self.m ** (1.0 - 1.0 / self.p))

    def support_point(self):
        if self.p == 1:
            return np.eye(self.m)[0]
        if self.p == 2:
            return np.full(self.m, 1.0 / math.sqrt(self.m))
        return np.ones(self.m)

    def contains(self, lam, tol=DEFAULT_CONFIG.feasibility_slack):
        lam = np.asarray(lam, dtype=float)
        return bool(np.linalg.norm(lam, ord=self.p) <= 1.0 + tol)

    def interior_point(self):
        return np.zeros(self.m)

    def sample(self, rng, k):
        z = rng.standard_normal((k, self.m))
        nrm = np.linalg.norm(z, ord=self.p, axis=1, keepdims=True)
        return z / nrm * rng.random((k, 1)) ** (1.0 / self.m)


@dataclass(frozen=True, eq=False)
class VertexPolytope:
    """conv{a_1..a_K}; vertices stored as rows of a (K, m) array."""

    vertices: np.ndarray
    max_iter: int = 100_000

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if v.shape[0] < 1:
            raise ValueError("vertex polytope needs at least one vertex")
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self):
        return self.vertices.shape[1]

    def project(self, y, start=None):
        return self.project_weights(y) @ self.vertices

    def project_weights(self, y, tol=DEFAULT_CONFIG.fixed_point_tol):
        """Barycentric weights of the projection (Wolfe's minimum-norm-point method).

        Finite active-set algorithm on the shifted points a_k - y; each major
        cycle adds the vertex most aligned against the current point, minor
        cycles drop vertices whose affine weights turn nonpositive.
        """
        V = self.vertices
        K = V.shape[0]
        if K == 1:
            return np.ones(1)
        P = V - np.asarray(y, dtype=float)
        scale = max(float(np.max(np.sum(P * P, axis=1))), 1e-300)
        active = [int(np.argmin(np.sum(P * P, axis=1)))]
        weights = np.ones(1)
        for _ in range(self.max_iter):
            x = weights @ P[active]
            j = int(np.argmin(P @ x))
            if x @ x - P[j] @ x <= tol * scale or j in active:
                break
            active.append(j)
            weights = np.append(weights, 0.0)
            while True:
                S = P[active]
                n = len(active)
                kkt = np.zeros((n + 1, n + 1))
                kkt[:n, :n] = S @ S.T
                kkt[:n, n] = kkt[n, :n] = 1.0
                rhs = np.zeros(n + 1)
                rhs[n] = 1.0
                affine = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:n]
                if affine.min() > 1e-14:
                    weights = affine
                    break
                neg = affine <= 1e-14
                theta = np.min(weights[neg] / (weights[neg] - affine[neg]))
                weights = weights + theta * (affine - weights)
                keep = weights > 1e-14
                keep[np.argmin(np.where(neg, weights, np.inf))] = False
                active = [a for a, k in zip(active, keep) if k]
                weights = weights[keep] / weights[keep].sum()
        out = np.zeros(K)
        out[active] = weights
        return out

    def linear_max(self, c):
        s = self.vertices @ np.asarray(c, dtype=float)
        k = int(np.argmax(s))
        return float(s[k]), self.vertices[k].copy()

    def support_radius(self):
        return float(np.abs(self.vertices).sum(axis=1).max())

    def support_point(self):
        return self.vertices[int(np.argmax(np.abs(self.vertices).sum(axis=1)))].copy()

    def contains(self, lam, tol=DEFAULT_CONFIG.feasibility_slack):
        return bool(np.linalg.norm(self.project(lam) - np.asarray(lam, dtype=float)) <= max(tol, 1e-8))

    def interior_point(self):
        return self.vertices.mean(axis=0)

    def sample(self, rng, k):
        return rng.dirichlet(np.ones(self.vertices.shape[0]), size=k) @ self.vertices


def _independent_rows(A, tol):
    """Indices of rows of A kept so that [1^T; A_kept] has full row rank."""
    m = A.shape[1]
    kept, basis = [], np.ones((1, m))
    for i, row in enumerate(A):
        cand = np.vstack([basis, row])
        s = np.linalg.svd(cand, compute_uv=False)
        if s[-1] > tol * max(1.0, s[0]):
            kept.append(i)
            basis = cand
    return kept


@dataclass(frozen=True, eq=False)
class MomentPolytope:
    """{p : A p = b, sum(p) = 1, p >= 0}."""

    A: np.ndarray
    b: np.ndarray
    rank_tol: float = DEFAULT_CONFIG.rank_tol
    kept_rows: list = field(init=False)
    feasible_point: np.ndarray | None = field(init=False)
    strict_witness: np.ndarray | None = field(init=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 1:
            A = A.reshape(1, -1) if A.size else A.reshape(0, 0)
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "kept_rows", _independent_rows(A, self.rank_tol))
        pt, witness = self._find_witness()
        object.__setattr__(self, "feasible_point", pt)
        object.__setattr__(self, "strict_witness", witness)

    @classmethod
    def unconstrained(cls, m):
        return cls(np.zeros((0, m)), np.zeros(0))

    @property
    def dim(self):
        return self.A.shape[1]

    @property
    def feasible(self):
        return self.feasible_point is not None

    @property
    def equality_matrix(self):
        """Independent rows [1^T; A_kept] and right-hand side."""
        E = np.vstack([np.ones((1, self.dim)), self.A[self.kept_rows]])
        f = np.concatenate([[1.0], self.b[self.kept_rows]])
        return E, f

    def _affine_correct(self, p):
        E, f = self.equality_matrix
        corr, *_ = np.linalg.lstsq(E, E @ p - f, rcond=None)
        return p - corr

    def _find_witness(self):
        m, d = self.dim, self.A.shape[0]
        # maximize s subject to A p = b, sum p = 1, p_i >= s
        c = np.zeros(m + 1)
        c[-1] = -1.0
        A_eq = np.hstack([np.vstack([self.A, np.ones((1, m))]), np.zeros((d + 1, 1))])
        b_eq = np.concatenate([self.b, [1.0]])
        A_ub = np.hstack([-np.eye(m), np.ones((m, 1))])
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(m), A_eq=A_eq, b_eq=b_eq,
                      bounds=[(0, None)] * m + [(None, 1.0)], method="highs")
        if res.status != 0:
            return None, None
        p = self._affine_correct(res.x[:m])
        if np.abs(self.A @ p - self.b).max(initial=0.0) > 1e-8:
            return None, None
        if res.x[-1] > 1e-10 and p.min() > 0:
            return np.maximum(p, 0.0), p
        p = np.maximum(p, 0.0)
        return p / p.sum(), None

    def _require_feasible(self):
        if not self.feasible:
            raise Infeasible("no p satisfies A p = b, sum(p) = 1, p >= 0")

    def project(self, y, start=None):
        self._require_feasible()
        E, f = self.equality_matrix
        p0 = self.feasible_point if start is None else np.asarray(start, dtype=float)
        return active_set_projection(np.asarray(y, dtype=float), E, f, p0)

    @property
    def vertices(self):
        """Basic feasible solutions, or None when enumeration would be too large."""
        cached = self.__dict__.get("_vertices", False)
        if cached is not False:
            return cached
        verts = self._enumerate_vertices() if self.feasible else None
        object.__setattr__(self, "_vertices", verts)
        return verts

    def _enumerate_vertices(self, limit=20_000):
        E, f = self.equality_matrix
        r, m = E.shape
        if math.comb(m, r) > limit:
            return None
        found = []
        for cols in itertools.combinations(range(m), r):
            B = E[:, cols]
            if abs(np.linalg.det(B)) < 1e-12:
                continue
            pb = np.linalg.solve(B, f)
            if pb.min() < -1e-12:
                continue
            p = np.zeros(m)
            p[list(cols)] = np.maximum(pb, 0.0)
            if not any(np.allclose(p, q, atol=1e-12) for q in found):
                found.append(p)
        return np.array(found)

    def linear_max(self, c):
        self._require_feasible()
        V = self.vertices
        if V is not None:
            s = V @ np.asarray(c, dtype=float)
            k = int(np.argmax(s))
            return float(s[k]), V[k].copy()
        m = self.dim
        res = linprog(-np.asarray(c, dtype=float),
                      A_eq=np.vstack([self.A, np.ones((1, m))]),
                      b_eq=np.concatenate([self.b, [1.0]]),
                      bounds=[(0, None)] * m, method="highs")
        if res.status != 0:
            raise Infeasible(f"linear program failed: {res.message}")
        return float(-res.fun), res.x

    def support_radius(self):
        return 1.0

    def support_point(self):
        self._require_feasible()
        return self.feasible_point.copy()

    def contains(self, lam, tol=DEFAULT_CONFIG.feasibility_slack):
        lam = np.asarray(lam, dtype=float)
        ok = lam.min() >= -tol and abs(lam.sum() - 1.0) <= tol
        return bool(ok and np.abs(self.A @ lam - self.b).max(initial=0.0) <= tol)

    def interior_point(self):
        self._require_feasible()
        return (self.strict_witness if self.strict_witness is not None else self.feasible_point).copy()

    def sample(self, rng, k):
        self._require_feasible()
        w = self.interior_point()
        out = []
        for _ in range(k):
            out.append(self.project(rng.dirichlet(np.ones(self.dim)), start=w))
        return np.array(out)


def active_set_projection(y, E, f, p0, tol=1e-13, max_iter=None):
    """min 0.5*||p - y||^2 s.t. E p = f, p >= 0, primal active set from feasible p0."""
    p = np.array(p0, dtype=float)
    m = p.size
    working = []
    max_iter = max_iter or 20 * m + 100
    for _ in range(max_iter):
        K = np.vstack([E, np.eye(m)[working]]) if working else E
        r = p - y
        nu, *_ = np.linalg.lstsq(K.T, r, rcond=None)
        s = K.T @ nu - r
        if np.linalg.norm(s) <= tol * (1.0 + np.linalg.norm(y)):
            bound_mult = nu[E.shape[0]:]
            if bound_mult.size == 0 or bound_mult.min() >= -tol:
                break
            working.pop(int(np.argmin(bound_mult)))
            continue
        step, block = 1.0, None
        for i in range(m):
            if i not in working and s[i] < 0:
                ratio = -p[i] / s[i]
                if ratio < step:
                    step, block = ratio, i
        p = p + step * s
        if block is not None:
            p[block] = 0.0
            working.append(block)
    return np.maximum(p, 0.0)


def project_generic(y, Q, start=None):
    """Projection onto any supported set; dispatches to the set's own method."""
    return Q.project(y, start=start)


def support_radius(Q):
    """M_Q = sup over Q of the l1 norm."""
    return Q.support_radius()
