"""Objective families g_1..g_m exposed as value/gradient oracles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class QuadraticFamily:
    """g_i(x) = 0.5 (x - c_i)^T M_i (x - c_i) + e_i with symmetric PSD M_i."""

    matrices: np.ndarray  # (m, n, n)
    centers: np.ndarray  # (m, n)
    offsets: np.ndarray = None  # (m,)
    _diag: np.ndarray | None = field(init=False, repr=False)

    def __post_init__(self):
        M = np.asarray(self.matrices, dtype=float)
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if M.ndim != 3 or M.shape[1] != M.shape[2] or M.shape[:2] != c.shape:
            raise ValueError("matrices must be (m, n, n) and centers (m, n)")
        if not np.allclose(M, np.transpose(M, (0, 2, 1))):
            raise ValueError("quadratic matrices must be symmetric")
        e = np.zeros(M.shape[0]) if self.offsets is None else np.asarray(self.offsets, dtype=float)
        object.__setattr__(self, "matrices", M)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "offsets", e)
        # diagonal fast path: the benchmark families are all diagonal
        off = M - np.einsum("kij,ij->kij", M, np.eye(M.shape[1]))
        object.__setattr__(self, "_diag", np.einsum("kii->ki", M).copy() if not off.any() else None)

    @classmethod
    def diagonal(cls, diags, centers, offsets=None):
        diags = np.asarray(diags, dtype=float)
        return cls(np.einsum("ki,ij->kij", diags, np.eye(diags.shape[1])), centers, offsets)

    @property
    def m(self):
        return self.matrices.shape[0]

    @property
    def n(self):
        return self.matrices.shape[1]

    def values_and_grads(self, x):
        d = np.asarray(x, dtype=float) - self.centers
        if self._diag is not None:
            g = self._diag * d
        else:
            g = np.einsum("kij,kj->ki", self.matrices, d)
        return 0.5 * np.sum(d * g, axis=1) + self.offsets, g

    def values(self, x):
        return self.values_and_grads(x)[0]

    def grads(self, x):
        return self.values_and_grads(x)[1]

    def hessians(self, x=None):
        return self.matrices

    @property
    def lipschitz(self):
        return np.array([np.linalg.eigvalsh(M)[-1] for M in self.matrices])

    def grad_bound(self, center, radius):
        """Per-component sup of ||grad g_i|| over the ball (triangle-inequality bound)."""
        center = np.asarray(center, dtype=float)
        g0 = self.grads(center)
        return np.linalg.norm(g0, axis=1) + self.lipschitz * radius

    def weighted_argmin(self, w):
        """Exact minimizer and value of sum_i w_i g_i(x)."""
        w = np.asarray(w, dtype=float)
        H = np.einsum("k,kij->ij", w, self.matrices)
        rhs = np.einsum("k,kij,kj->i", w, self.matrices, self.centers)
        x = np.linalg.lstsq(H, rhs, rcond=None)[0]
        return x, float(w @ self.values(x))


@dataclass(frozen=True, eq=False)
class CallableFamily:
    """Family defined by plain Python callables for values and gradients.

    ``lipschitz`` holds per-component gradient Lipschitz constants when known.
    Gradient-norm bounds over a ball are estimated by sampling with a 1.1
    safety factor unless ``grad_bound_fn`` is supplied.
    """

    funcs: tuple
    grad_funcs: tuple
    n: int
    lipschitz: np.ndarray | None = None
    grad_bound_fn: object = None
    safety: float = 1.1

    @property
    def m(self):
        return len(self.funcs)

    def values(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([float(f(x)) for f in self.funcs])

    def grads(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([np.atleast_1d(np.asarray(df(x), dtype=float)) for df in self.grad_funcs])

    def values_and_grads(self, x):
        return self.values(x), self.grads(x)

    def grad_bound(self, center, radius, samples=2000, seed=0):
        if self.grad_bound_fn is not None:
            return np.asarray(self.grad_bound_fn(center, radius), dtype=float)
        rng = np.random.default_rng(seed)
        center = np.asarray(center, dtype=float).reshape(self.n)
        z = rng.standard_normal((samples, self.n))
        z *= (radius * rng.random((samples, 1)) ** (1.0 / self.n)) / np.linalg.norm(z, axis=1, keepdims=True)
        pts = np.vstack([center, center + z, center + radius * np.sign(z[: min(samples, 64)])/np.sqrt(self.n)])
        best = np.max([np.linalg.norm(self.grads(p), axis=1) for p in pts], axis=0)
        return self.safety * best


def validate_family(family, rng, n_pairs=200, scale=2.0, convexity_slack=1e-9, fd_tol=1e-5):
    """Random midpoint-convexity and finite-difference consistency checks.

    Returns a dict with the worst convexity violation and worst relative
    directional-derivative mismatch; ``ok`` is True when both are in tolerance.
    """
    worst_cvx, worst_fd = 0.0, 0.0
    h = 1e-6
    for _ in range(n_pairs):
        x = scale * rng.standard_normal(family.n)
        y = scale * rng.standard_normal(family.n)
        gx, gy, gm = family.values(x), family.values(y), family.values(0.5 * (x + y))
        worst_cvx = max(worst_cvx, float(np.max(gm - 0.5 * (gx + gy))))
        d = rng.standard_normal(family.n)
        d /= np.linalg.norm(d)
        fd = (family.values(x + h * d) - family.values(x - h * d)) / (2 * h)
        an = family.grads(x) @ d
        rel = np.abs(fd - an) / np.maximum(1.0, np.abs(an))
        worst_fd = max(worst_fd, float(rel.max()))
    return {
        "max_convexity_violation": worst_cvx,
        "max_fd_mismatch": worst_fd,
        "ok": worst_cvx <= convexity_slack and worst_fd <= fd_tol,
    }
