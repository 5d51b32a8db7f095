import math

import numpy as np
import pytest

from smoothflow.objectives import QuadraticFamily
from smoothflow.penalties import KL, KLPushforward, QuadraticToCenter
from smoothflow.sets import Box, LpBall, Simplex, VertexPolytope
from smoothflow.smoothing import SupProblem

CLOSED_FORM_VARIANTS = (
    "LogSumExpSimplex",
    "QuadProxSimplex",
    "QuadProxBox",
    "QuadProxLpBall-1",
    "QuadProxLpBall-2",
    "QuadProxLpBall-inf",
    "VertexLogSumExp",
)

# pairs that the generic dual solver also handles
GENERIC_VARIANTS = CLOSED_FORM_VARIANTS[:-1]


def random_quadratics(rng, m, n, spread=1.0):
    diags = rng.uniform(0.5, 2.0, size=(m, n))
    centers = spread * rng.standard_normal((m, n))
    offsets = rng.uniform(-0.5, 0.5, size=m)
    return QuadraticFamily.diagonal(diags, centers, offsets)


def random_set_and_penalty(variant, rng, m):
    if variant == "LogSumExpSimplex":
        prior = rng.dirichlet(np.full(m, 4.0))
        return Simplex(m), KL(prior)
    if variant == "QuadProxSimplex":
        return Simplex(m), QuadraticToCenter(rng.dirichlet(np.full(m, 2.0)))
    if variant == "QuadProxBox":
        lower = rng.uniform(0.0, 0.5, size=m)
        upper = lower + rng.uniform(0.2, 1.5, size=m)
        center = lower + rng.random(m) * (upper - lower)
        return Box(lower, upper), QuadraticToCenter(center)
    if variant.startswith("QuadProxLpBall"):
        p = {"1": 1, "2": 2, "inf": math.inf}[variant.split("-")[1]]
        ball = LpBall(m, p)
        return ball, QuadraticToCenter(0.5 * ball.sample(rng, 1)[0])
    if variant == "VertexLogSumExp":
        k = m + 1
        verts = rng.standard_normal((k, m))
        return VertexPolytope(verts), KLPushforward(rng.dirichlet(np.full(k, 4.0)))
    raise ValueError(variant)


def random_problem(variant, rng, m=None, n=2, spread=1.0):
    m = int(rng.integers(2, 5)) if m is None else m
    Q, D = random_set_and_penalty(variant, rng, m)
    return SupProblem(random_quadratics(rng, m, n, spread), Q, D)


def central_difference(fun, x, h):
    """Five-point central difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (-fun(x + 2 * e) + 8 * fun(x + e) - 8 * fun(x - e) + fun(x - 2 * e)) / (12 * h)
    return out


def self_consistent_difference(fun, x, h0, rungs=4):
    """Central difference whose step is chosen by the oracle alone.

    Piecewise-smooth functions (projections switching faces) break the
    fourth-order error estimate when the stencil straddles a kink. Over the
    ladder h0, h0/10, ... the step where the estimates at h and h/2 agree
    best is used; the function's claimed gradient is never consulted.
    """
    best = None
    for k in range(rungs):
        h = h0 * 10.0 ** -k
        a, b = central_difference(fun, x, h), central_difference(fun, x, h / 2)
        spread = float(np.linalg.norm(a - b))
        if best is None or spread < best[0]:
            best = (spread, b)
    return best[1]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# --------------------------------------------------------------------------- #
# acceptance summary: one line per criterion, printed after the session
# --------------------------------------------------------------------------- #

ACCEPTANCE_LINES = {}


def record_acceptance(number, title, passed, seconds, detail=""):
    ACCEPTANCE_LINES[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {title} ({seconds:.1f} s){' ' + detail if detail else ''}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
