"""Strongly convex penalties D on the dual domain Q.

Each penalty is nonnegative on its domain with infimum zero. ``sigma`` is the
strong-convexity modulus with respect to the Euclidean norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_CONFIG
from .errors import BoundaryGradient, InfeasiblePoint, UnsupportedPair
from .sets import Box, LpBall, MomentPolytope, Simplex, VertexPolytope


def _xlogy_ratio(lam, prior):
    out = np.zeros_like(lam)
    pos = lam > 0
    out[pos] = lam[pos] * np.log(lam[pos] / prior[pos])
    return out


@dataclass(frozen=True, eq=False)
class KL:
    """KL(lam || prior) on simplex-like domains; 0 log 0 = 0."""

    prior: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.prior, dtype=float)
        if v.ndim != 1 or np.any(v <= 0):
            raise ValueError("KL prior must be a strictly positive vector")
        if abs(v.sum() - 1.0) > 1e-12:
            raise ValueError("KL prior must sum to one")
        object.__setattr__(self, "prior", v)

    @classmethod
    def uniform(cls, m):
        return cls(np.full(m, 1.0 / m))

    def value(self, lam, tol=DEFAULT_CONFIG.feasibility_slack):
        lam = np.asarray(lam, dtype=float)
        if lam.shape != self.prior.shape or lam.min() < -tol or abs(lam.sum() - 1.0) > tol:
            raise InfeasiblePoint("KL penalty evaluated outside the probability simplex")
        return float(_xlogy_ratio(np.maximum(lam, 0.0), self.prior).sum())

    def grad(self, lam):
        lam = np.asarray(lam, dtype=float)
        if np.any(lam <= 0):
            raise BoundaryGradient("KL gradient undefined at the simplex boundary")
        return 1.0 + np.log(lam / self.prior)


@dataclass(frozen=True, eq=False)
class QuadraticToCenter:
    """0.5 * ||lam - center||^2."""

    center: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def value(self, lam, tol=None):
        d = np.asarray(lam, dtype=float) - self.center
        return 0.5 * float(d @ d)

    def grad(self, lam):
        return np.asarray(lam, dtype=float) - self.center


@dataclass(frozen=True, eq=False)
class KLPushforward:
    """KL over barycentric weights of a vertex polytope, pushed forward to lam.

    Only available through the closed-form log-sum-exp over vertices; the
    value as a function of lam is never materialized.
    """

    prior: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.prior, dtype=float)
        if v.ndim != 1 or np.any(v <= 0) or abs(v.sum() - 1.0) > 1e-12:
            raise ValueError("pushforward prior must be strictly positive and normalized")
        object.__setattr__(self, "prior", v)

    @classmethod
    def uniform(cls, k):
        return cls(np.full(k, 1.0 / k))

    def weights_value(self, alpha):
        return float(_xlogy_ratio(np.asarray(alpha, dtype=float), self.prior).sum())

    def sigma_for(self, vertices):
        # KL is 1-strongly convex in l1 on the weights; pushforward through
        # lam = V^T alpha divides by max_k ||a_k||_2^2.
        return 1.0 / float(np.max(np.sum(np.asarray(vertices) ** 2, axis=1)))

    def value(self, lam, tol=None):
        raise NotImplementedError("pushforward KL is only evaluated through its vertex weights")

    def grad(self, lam):
        raise NotImplementedError("pushforward KL is only evaluated through its vertex weights")


def penalty_value(D, lam, Q=None, tol=DEFAULT_CONFIG.feasibility_slack):
    if Q is not None and not Q.contains(lam, tol):
        raise InfeasiblePoint("point lies outside the feasible set")
    return D.value(lam, tol) if isinstance(D, KL) else D.value(lam)


def penalty_grad(D, lam):
    return D.grad(lam)


def penalty_sup_C(D, Q):
    """Supremum of D over Q for the supported (penalty, set) pairs."""
    if isinstance(D, KL) and isinstance(Q, (Simplex, MomentPolytope)):
        if D.prior.size != Q.dim:
            raise ValueError("prior dimension does not match the set")
        return float(-np.log(D.prior.min()))
    if isinstance(D, KLPushforward) and isinstance(Q, VertexPolytope):
        if D.prior.size != Q.vertices.shape[0]:
            raise ValueError("pushforward prior must have one entry per vertex")
        return float(-np.log(D.prior.min()))
    if isinstance(D, QuadraticToCenter):
        c = D.center
        if isinstance(Q, Simplex):
            return 0.5 * (1.0 + float(c @ c) - 2.0 * float(c.min()))
        if isinstance(Q, Box):
            return 0.5 * float(np.sum(np.maximum((Q.lower - c) ** 2, (Q.upper - c) ** 2)))
        if isinstance(Q, LpBall):
            if Q.p == 2:
                return 0.5 * (1.0 + float(np.linalg.norm(c))) ** 2
            # convex penalty on a polytope: the supremum sits at a vertex
            if Q.p == 1:  # vertices +-e_i
                return 0.5 * (float(c @ c) + 1.0 + 2.0 * float(np.abs(c).max()))
            return 0.5 * float(np.sum((1.0 + np.abs(c)) ** 2))
    raise UnsupportedPair(f"no supremum constant for ({type(D).__name__}, {type(Q).__name__})")
