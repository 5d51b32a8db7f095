import math

import numpy as np
import pytest
from oracles import random_moment_instance, slsqp_tilting

from smoothflow.bench import tilting_tail_ratio
from smoothflow.dro import (
    BENCH_A,
    DROProblem,
    dro_reg_grad,
    dro_reg_value,
    make_dro_benchmark,
    solve_tilting,
    tilted_value,
)
from smoothflow.errors import NoStrictWitness
from smoothflow.objectives import QuadraticFamily
from smoothflow.penalties import KL
from smoothflow.sets import MomentPolytope, Simplex
from smoothflow.smoothing import SupProblem, reg_grad, reg_value


def _bench_set():
    return MomentPolytope(BENCH_A, np.zeros(2))


def _check_solution(sol, aset, tol=1e-10):
    assert abs(sol.p.sum() - 1) <= 1e-12
    # interiority: log p is finite always; p itself is positive unless e^(log p) underflows
    assert np.all(np.isfinite(sol.log_p))
    representable = sol.log_p > math.log(np.finfo(float).tiny)
    assert np.all(sol.p[representable] > 0)
    assert np.allclose(np.exp(sol.log_p), sol.p, rtol=1e-9, atol=0)
    assert np.max(np.abs(aset.A @ sol.p - aset.b), initial=0.0) <= tol


# ----------------------------------------------------------------------------- solve_tilting


def test_constant_costs_give_uniform():
    sol = solve_tilting(np.full(6, 0.7), _bench_set(), 0.3)
    assert np.allclose(sol.p, 1 / 6, atol=1e-15)
    assert np.allclose(sol.theta, 0, atol=1e-15)


def test_no_moment_rows_is_softmax(rng):
    f = rng.standard_normal(5)
    prior = rng.dirichlet(np.ones(5))
    sol = solve_tilting(f, MomentPolytope(np.zeros((0, 5)), np.zeros(0)), 0.4, prior)
    w = prior * np.exp(f / 0.4)
    assert np.allclose(sol.p, w / w.sum(), atol=1e-15)


def test_three_scenarios_against_one_parameter_grid():
    aset = MomentPolytope(np.array([[1.0, -1.0, 0.0]]), np.zeros(1))
    f = np.array([1.0, 0.0, 0.0])
    sol = solve_tilting(f, aset, 1.0)
    assert sol.p[0] == pytest.approx(sol.p[1], abs=1e-12)
    # feasible family (s, s, 1 - 2 s)
    s = np.arange(1, 50_000) * 1e-5
    P = np.stack([s, s, 1 - 2 * s], axis=1)
    vals = P @ f - np.sum(P * np.log(3 * P), axis=1)
    best = P[np.argmax(vals)]
    assert np.allclose(sol.p, best, atol=1e-5)
    # stationarity of the 1-D objective: 1 - 2 log(3 s) + 2 log(3 (1 - 2 s)) = 0
    s_star = sol.p[0]
    assert 1 - 2 * math.log(3 * s_star) + 2 * math.log(3 * (1 - 2 * s_star)) == pytest.approx(0, abs=1e-10)


def test_no_strict_witness_raises():
    aset = MomentPolytope(np.array([[1.0, 0.0, 0.0]]), np.array([1.0]))  # forces p = e1
    with pytest.raises(NoStrictWitness):
        solve_tilting(np.zeros(3), aset, 1.0)
    with pytest.raises(NoStrictWitness):
        DROProblem(QuadraticFamily.diagonal(np.ones((3, 1)), np.zeros((3, 1))), aset)


@pytest.mark.parametrize("mu", [1e-4, 1e-2, 1.0, 100.0])
def test_random_instances_feasible_and_interior(mu, rng):
    for _ in range(25):
        m, d = int(rng.integers(3, 9)), int(rng.integers(1, 4))
        A, b, _ = random_moment_instance(rng, m, min(d, m - 1))
        aset = MomentPolytope(A, b)
        f = 2 * rng.standard_normal(m)
        _check_solution(solve_tilting(f, aset, mu), aset)


def test_matches_primal_slsqp_oracle(rng):
    for _ in range(10):
        m, d = int(rng.integers(3, 7)), int(rng.integers(1, 3))
        A, b, p0 = random_moment_instance(rng, m, d)
        f = rng.standard_normal(m)
        mu = rng.uniform(0.5, 2.0)
        prior = np.full(m, 1.0 / m)
        sol = solve_tilting(f, MomentPolytope(A, b), mu)
        p_ref, v_ref = slsqp_tilting(f, A, b, mu, prior, p0)
        assert np.allclose(sol.p, p_ref, atol=1e-5)
        assert tilted_value(f, sol, mu)[0] == pytest.approx(v_ref, abs=1e-8)
        assert tilted_value(f, sol, mu)[0] >= v_ref - 1e-12  # the exact maximizer cannot lose


def test_warm_start_agrees_with_cold(rng):
    aset = _bench_set()
    f = rng.standard_normal(6)
    cold = solve_tilting(f, aset, 0.05)
    warm = solve_tilting(f + 1e-3, aset, 0.05, theta0=cold.theta)
    ref = solve_tilting(f + 1e-3, aset, 0.05)
    assert np.allclose(warm.p, ref.p, atol=1e-10)
    assert warm.newton_iters <= ref.newton_iters


def test_wild_warm_start_recovers(rng):
    aset = _bench_set()
    f = rng.standard_normal(6)
    sol = solve_tilting(f, aset, 1e-3, theta0=np.array([1e4, -1e4]))
    _check_solution(sol, aset)
    assert np.allclose(sol.p, solve_tilting(f, aset, 1e-3).p, atol=1e-10)


def test_moderate_mu_gives_strictly_positive_p(rng):
    for _ in range(50):
        m, d = int(rng.integers(3, 9)), int(rng.integers(1, 4))
        A, b, _ = random_moment_instance(rng, m, min(d, m - 1))
        sol = solve_tilting(rng.standard_normal(m), MomentPolytope(A, b), rng.uniform(0.5, 2.0))
        assert sol.p.min() > 0


def test_quadratic_tail_on_benchmark():
    costs, aset = make_dro_benchmark(7)
    ratio, sol = tilting_tail_ratio(DROProblem(costs, aset))
    assert ratio <= 0.1
    assert sol.residual <= 1e-10


# ----------------------------------------------------------------------------- value and gradient


def test_constant_cost_value():
    fam = QuadraticFamily.diagonal(np.zeros((6, 2)), np.zeros((6, 2)), np.full(6, 1.25))
    assert dro_reg_value(np.ones(2), fam, _bench_set(), 0.5) == pytest.approx(1.25, abs=1e-15)


def test_empty_moment_rows_match_entropic_smoothing(rng):
    fam = QuadraticFamily.diagonal(rng.uniform(0.5, 2, (4, 3)), rng.standard_normal((4, 3)), rng.uniform(-1, 1, 4))
    empty = MomentPolytope(np.zeros((0, 4)), np.zeros(0))
    P = SupProblem(fam, Simplex(4), KL.uniform(4))
    for _ in range(10):
        x = rng.standard_normal(3)
        mu = rng.uniform(0.05, 2)
        assert dro_reg_value(x, fam, empty, mu) == pytest.approx(reg_value(P, x, mu), abs=1e-10)
        assert np.allclose(dro_reg_grad(x, fam, empty, mu), reg_grad(P, x, mu), atol=1e-10)


def test_benchmark_value_matches_generic_dual_solver():
    costs, aset = make_dro_benchmark(3)
    P = SupProblem(costs, aset, KL.uniform(6))
    assert P.tag == "Generic"
    x = np.zeros(5)
    assert dro_reg_value(x, costs, aset, 1.0) == pytest.approx(reg_value(P, x, 1.0), abs=1e-8)


def test_gradient_vanishes_at_common_center():
    centers = np.tile(np.array([0.3, -1.0]), (6, 1))
    fam = QuadraticFamily.diagonal(np.ones((6, 2)), centers, np.linspace(-0.2, 0.2, 6))
    assert np.allclose(dro_reg_grad(np.array([0.3, -1.0]), fam, _bench_set(), 0.7), 0, atol=1e-15)


def test_gradient_matches_finite_differences(rng):
    costs, aset = make_dro_benchmark(11)
    for _ in range(5):
        x = rng.standard_normal(5)
        g = dro_reg_grad(x, costs, aset, 0.5)
        fd = np.zeros(5)
        for i in range(5):
            e = np.zeros(5)
            e[i] = 1e-5
            fd[i] = (dro_reg_value(x + e, costs, aset, 0.5) - dro_reg_value(x - e, costs, aset, 0.5)) / 2e-5
        assert np.linalg.norm(fd - g) <= 1e-6 * np.linalg.norm(g)


def test_mu_monotone_and_sandwich(rng):
    costs, aset = make_dro_benchmark(5)
    prob = DROProblem(costs, aset)
    C = math.log(6)
    for _ in range(20):
        x = 2 * rng.standard_normal(5)
        phi = prob.raw_value(x)
        vals = [prob.fresh().evaluate(x, mu).value for mu in (1e-3, 1e-2, 1e-1, 1.0)]
        assert all(a >= b - 1e-10 for a, b in zip(vals, vals[1:]))
        for mu, v in zip((1e-3, 1e-2, 1e-1, 1.0), vals):
            assert -1e-9 <= phi - v <= C * mu + 1e-9


def test_hessian_matches_finite_difference_of_gradient(rng):
    costs, aset = make_dro_benchmark(4)
    prob = DROProblem(costs, aset)
    x = rng.standard_normal(5)
    H = prob.fresh().hessian(x, 0.3)
    fd = np.zeros((5, 5))
    for i in range(5):
        e = np.zeros(5)
        e[i] = 1e-5
        fd[:, i] = (prob.fresh().evaluate(x + e, 0.3).grad - prob.fresh().evaluate(x - e, 0.3).grad) / 2e-5
    assert np.allclose(H, fd, atol=1e-6 * max(1.0, np.abs(H).max()))


# ----------------------------------------------------------------------------- benchmark instance


def test_benchmark_instance_recipe():
    costs, aset = make_dro_benchmark(0)
    assert np.array_equal(aset.A, [[1, -1, 0, 0, 0, 0], [0, 1, -1, 0, 0, 0]])
    assert np.array_equal(aset.b, [0, 0])
    diag = np.array([np.diag(S) for S in costs.matrices])
    assert diag.shape == (6, 5) and diag.min() >= 0.5 and diag.max() <= 2.0
    assert np.all(np.abs(costs.offsets) <= 0.2)


def test_benchmark_deterministic():
    a, _ = make_dro_benchmark(42)
    b, _ = make_dro_benchmark(42)
    assert np.array_equal(a.matrices, b.matrices) and np.array_equal(a.centers, b.centers)
    assert np.array_equal(a.offsets, b.offsets)
