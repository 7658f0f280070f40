import math

import numpy as np
import pytest

import cdefit as c
from conftest import finite_diff_gradient, random_instance


def naive_loglik(theta, data, grid, fm):
    """Unstabilized pure-python double loop over observations and grid points."""
    total = 0.0
    for i in range(data.n):
        gi = float(np.dot(theta, c.evaluate(fm, data.xs[i], data.ys[i])))
        inner = 0.0
        for j in range(grid.m):
            inner += math.exp(
                float(np.dot(theta, c.evaluate(fm, data.xs[i], grid.points[j])))
            )
        total += gi - math.log(inner)
    return total


def test_zero_theta_loglik():
    data, grid, fm = random_instance(0, n=7, m=9)
    assert c.target_loglik(np.zeros(2), data, grid, fm) == pytest.approx(
        -7 * np.log(9), abs=1e-12
    )


def test_single_observation_expansion():
    fm = c.kernel_a()
    data = c.Dataset(xs=np.array([[1.0]]), ys=np.array([0.2]))
    grid = c.BackgroundGrid(points=np.array([0.2, 0.9]), scheme="regular",
                            seed=0, domain=c.Domain(0.2, 0.9))
    theta = np.array([0.3, -0.7])
    g1 = theta @ c.evaluate(fm, [1.0], 0.2)
    g2 = theta @ c.evaluate(fm, [1.0], 0.9)
    want = g1 - np.log(np.exp(g1) + np.exp(g2))
    assert c.target_loglik(theta, data, grid, fm) == pytest.approx(want, abs=1e-14)


def test_matches_naive_double_loop():
    data, grid, fm = random_instance(1, n=5, m=4)
    rng = np.random.default_rng(2)
    for _ in range(5):
        theta = rng.normal(scale=0.8, size=fm.out_dim)
        got = c.target_loglik(theta, data, grid, fm)
        assert got == pytest.approx(naive_loglik(theta, data, grid, fm), abs=1e-12)


def test_score_at_zero_is_case_minus_grid_mean():
    data, grid, fm = random_instance(3, n=6, m=5)
    want = np.zeros(fm.out_dim)
    for i in range(data.n):
        want += c.evaluate(fm, data.xs[i], data.ys[i])
        want -= c.evaluate_grid(fm, data.xs[i], grid.points).mean(axis=0)
    np.testing.assert_allclose(c.target_score(np.zeros(fm.out_dim), data, grid, fm),
                               want, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_score_matches_finite_differences(seed):
    data, grid, fm = random_instance(seed, n=6, m=5)
    theta = np.random.default_rng(seed + 100).normal(size=fm.out_dim)
    score = c.target_score(theta, data, grid, fm)
    fd = finite_diff_gradient(lambda t: c.target_loglik(t, data, grid, fm), theta)
    np.testing.assert_allclose(score, fd, rtol=1e-6, atol=1e-6)


def test_score_near_zero_at_optimum(small_instance, small_direct_theta):
    data, grid, fm = small_instance
    score = c.target_score(small_direct_theta, data, grid, fm)
    assert np.max(np.abs(score)) < 1e-6 * data.n


def test_alpha_closed_form_at_zero_theta():
    data, grid, fm = random_instance(4, n=4, m=100)
    alpha = c.alpha_closed_form(np.zeros(fm.out_dim), data, grid, fm)
    np.testing.assert_allclose(alpha, -np.log(100), atol=1e-12)
    assert alpha[0] == pytest.approx(-4.60517, abs=1e-5)


def test_alpha_normalizes_discrete_sums():
    data, grid, fm = random_instance(5, n=6, m=7)
    theta = np.array([0.4, -1.1])
    alpha = c.alpha_closed_form(theta, data, grid, fm)
    for i in range(data.n):
        g = c.evaluate_grid(fm, data.xs[i], grid.points) @ theta
        assert np.sum(np.exp(alpha[i] + g)) == pytest.approx(1.0, abs=1e-12)


def test_alpha_matches_bisection_oracle():
    data, grid, fm = random_instance(6, n=3, m=5)
    theta = np.array([-0.9, 0.6])
    alpha = c.alpha_closed_form(theta, data, grid, fm)
    for i in range(data.n):
        g = c.evaluate_grid(fm, data.xs[i], grid.points) @ theta
        lo, hi = -60.0, 60.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.sum(np.exp(mid + g)) > 1.0:
                hi = mid
            else:
                lo = mid
        assert alpha[i] == pytest.approx(0.5 * (lo + hi), abs=1e-10)


def test_profile_identity():
    data, grid, fm = random_instance(7, n=9, m=6)
    rng = np.random.default_rng(8)
    for _ in range(20):
        theta = rng.normal(scale=1.2, size=fm.out_dim)
        alpha = c.alpha_closed_form(theta, data, grid, fm)
        lhs = c.complete_loglik(alpha, theta, data, grid, fm)
        rhs = c.target_loglik(theta, data, grid, fm) - data.n
        assert lhs == pytest.approx(rhs, abs=1e-10)


def test_complete_loglik_at_zero():
    data, grid, fm = random_instance(9, n=5, m=8)
    alpha = np.full(data.n, -np.log(8))
    got = c.complete_loglik(alpha, np.zeros(fm.out_dim), data, grid, fm)
    assert got == pytest.approx(-5 * np.log(8) - 5, abs=1e-12)


def test_complete_loglik_concave_in_alpha():
    data, grid, fm = random_instance(10, n=6, m=5)
    theta = np.array([0.8, -0.5])
    alpha_star = c.alpha_closed_form(theta, data, grid, fm)
    best = c.complete_loglik(alpha_star, theta, data, grid, fm)
    rng = np.random.default_rng(11)
    for _ in range(20):
        perturbed = alpha_star + rng.normal(scale=0.3, size=data.n)
        assert c.complete_loglik(perturbed, theta, data, grid, fm) <= best + 1e-12


def test_complete_loglik_overflow_sentinel():
    data, grid, fm = random_instance(12, n=4, m=5)
    alpha = np.full(data.n, 800.0)
    got = c.complete_loglik(alpha, np.zeros(fm.out_dim), data, grid, fm)
    assert got == float("-inf")


def test_target_hessian_matches_score_differences():
    data, grid, fm = random_instance(13, n=5, m=6)
    theta = np.array([0.3, 0.9])
    H = c.target_hessian(theta, data, grid, fm)
    for k in range(fm.out_dim):
        h = 1e-6
        up, dn = theta.copy(), theta.copy()
        up[k] += h
        dn[k] -= h
        fd_row = (c.target_score(up, data, grid, fm)
                  - c.target_score(dn, data, grid, fm)) / (2 * h)
        np.testing.assert_allclose(H[:, k], fd_row, rtol=1e-5, atol=1e-7)


def test_loglik_concave_in_theta():
    data, grid, fm = random_instance(14, n=8, m=7)
    rng = np.random.default_rng(15)
    for _ in range(20):
        theta = rng.normal(size=fm.out_dim)
        v = rng.normal(size=fm.out_dim)
        H = c.target_hessian(theta, data, grid, fm)
        assert v @ H @ v <= 1e-12


def test_degenerate_ipp_first_moment_matching():
    # identical x rows and the one-term basis h = (y): the fitted softmax
    # mean over the grid must reproduce the sample mean exactly
    rng = np.random.default_rng(16)
    n = 40
    xs = np.full((n, 1), 0.7)
    ys = rng.exponential(scale=0.8, size=n) + 0.05
    data = c.Dataset(xs=xs, ys=ys)
    grid = c.make_grid(c.Domain(0.0, float(ys.max()) * 1.1), 60)
    fm = c.polynomial_kernel(0, 1)
    theta = c.direct_fit(data, fm, grid, tol=1e-10)
    w = np.exp(grid.points * theta[0])
    softmax_mean = float(np.sum(grid.points * w) / np.sum(w))
    assert softmax_mean == pytest.approx(float(ys.mean()), abs=1e-8)


def test_model_state_eta():
    state = c.ModelState(theta=np.array([1.0]), alpha=np.array([-2.0, -3.0]))
    np.testing.assert_allclose(state.eta(np.e ** 2), [-4.0, -5.0])
