import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import expit

import cdefit as c
from cdefit.lcc import acceptance_probs, fit_lcc_diag, subsample_rows


def make_problem(n=200, m=30, seed=5, theta=(-1.0, -5.0), W=1e6):
    data = c.gen_model("I", n, seed=seed)
    grid = c.make_grid(c.domain_from_data(data.ys), m)
    fm = c.kernel_a()
    theta = np.array(theta)
    alpha = c.alpha_closed_form(theta, data, grid, fm)
    problem = c.WLRProblem(dataset=data, grid=grid, fm=fm,
                           eta=alpha - np.log(W), W=W)
    return problem, theta


def test_zero_pilot_gives_half():
    fm = c.kernel_a()
    pilot = c.Pilot(np.zeros(2))
    for z in (0, 1):
        assert c.acceptance_prob(pilot, z, [0.3], 1.7, fm) == pytest.approx(0.5)


def test_acceptance_monotone_along_ray():
    fm = c.kernel_a()
    x, y = [1.0], 1.0
    scales = np.linspace(0.0, 8.0, 20)
    a1 = [c.acceptance_prob(c.Pilot(np.array([s, s])), 1, x, y, fm) for s in scales]
    a0 = [c.acceptance_prob(c.Pilot(np.array([s, s])), 0, x, y, fm) for s in scales]
    assert all(np.diff(a1) < 0) and all(np.diff(a0) > 0)
    assert a1[-1] < 1e-6 and a0[-1] > 1 - 1e-6


@given(t0=st.floats(-4, 4), t1=st.floats(-4, 4),
       x=st.floats(0, 1), y=st.floats(-2, 2))
def test_acceptance_complementarity(t0, t1, x, y):
    fm = c.kernel_a()
    pilot = c.Pilot(np.array([t0, t1]))
    a1 = c.acceptance_prob(pilot, 1, [x], y, fm)
    a0 = c.acceptance_prob(pilot, 0, [x], y, fm)
    assert 0.0 <= a0 <= 1.0 and 0.0 <= a1 <= 1.0
    assert a0 + a1 == pytest.approx(1.0, abs=1e-12)


def test_zero_pilot_count_is_binomial_half():
    problem, _ = make_problem(n=100, m=40)
    n_rows = problem.n_rows
    sub = c.subsample(problem, c.Pilot(np.zeros(2)), seed=77)
    assert abs(sub.size - n_rows / 2) < 4 * np.sqrt(n_rows / 4)


def test_extreme_pilot_directional():
    problem, _ = make_problem(n=50, m=20)
    # on rows where the pilot probability is large, cases are nearly always
    # rejected and controls nearly always kept
    pilot = c.Pilot(np.array([50.0, 0.0]))
    a = acceptance_probs(problem, pilot)
    n, m = problem.dataset.n, problem.grid.m
    big_case = problem.dataset.ys > 0.5          # p~ = expit(50 y) ~ 1
    assert np.all(a[:n][big_case] < 1e-6)
    big_ctrl = np.tile(problem.grid.points > 0.5, n)
    assert np.all(a[n:][big_ctrl] > 1 - 1e-6)


def test_subsample_deterministic():
    problem, theta = make_problem()
    s1 = c.subsample(problem, c.Pilot(theta), seed=3)
    s2 = c.subsample(problem, c.Pilot(theta), seed=3)
    np.testing.assert_array_equal(s1.indices, s2.indices)
    s3 = c.subsample(problem, c.Pilot(theta), seed=4)
    assert not np.array_equal(s1.indices, s3.indices)


def test_expected_subsample_size():
    problem, theta = make_problem(n=300, m=40)
    pilot = c.Pilot(theta)
    a = acceptance_probs(problem, pilot)
    sizes = [c.subsample(problem, pilot, seed=s).size for s in range(20)]
    sd = np.sqrt(np.sum(a * (1 - a)))
    assert abs(np.mean(sizes) - a.sum()) < 4 * sd


def test_empty_subsample_error():
    data = c.Dataset(xs=np.array([[1.0]]), ys=np.array([50.0]))
    grid = c.BackgroundGrid(points=np.array([-50.0, -49.0]), scheme="regular",
                            seed=0, domain=c.Domain(-50.0, 50.0))
    fm = c.polynomial_kernel(0, 1)
    problem = c.WLRProblem(dataset=data, grid=grid, fm=fm,
                           eta=np.zeros(1), W=10.0)
    with pytest.raises(c.EmptySubsampleError):
        c.subsample(problem, c.Pilot(np.array([10.0])), seed=0)


def test_subsampled_log_odds_identity():
    # two rows, one case and one control at the same (x, y): the log-odds of
    # the accepted population is eta + (theta - pilot)^T h, enumerated by hand
    fm = c.kernel_a()
    x, y, eta = np.array([0.6]), 1.3, -2.1
    theta = np.array([0.4, -1.2])
    tilde = np.array([-0.3, 0.5])
    h = c.evaluate(fm, x, y)
    p1 = expit(eta + theta @ h)          # P(z=1 | x, y) in the full model
    a1 = 1.0 - expit(tilde @ h)          # acceptance of the case row
    a0 = expit(tilde @ h)                # acceptance of the control row
    lhs = np.log((p1 * a1) / ((1 - p1) * a0))
    rhs = eta + (theta - tilde) @ h
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_fit_lcc_with_converged_pilot_recovers_full_fit():
    data = c.gen_model("I", 400, seed=21)
    fm = c.kernel_a()
    res = c.fit(data, fm, c.FitConfig(m=50))
    assert res.converged
    grid = c.make_grid(c.domain_from_data(data.ys), 50)
    problem = c.WLRProblem(dataset=data, grid=grid, fm=fm,
                           eta=res.eta_hat, W=res.config.W)
    pilot = c.Pilot(res.theta_hat)
    ests = np.array([c.fit_lcc(problem, pilot, seed=s) for s in range(20)])
    np.testing.assert_allclose(ests.mean(axis=0), res.theta_hat, atol=0.1)


def test_fit_lcc_zero_pilot_is_plain_thinning():
    data = c.gen_model("I", 400, seed=22)
    fm = c.kernel_a()
    res = c.fit(data, fm, c.FitConfig(m=50))
    grid = c.make_grid(c.domain_from_data(data.ys), 50)
    problem = c.WLRProblem(dataset=data, grid=grid, fm=fm,
                           eta=res.eta_hat, W=res.config.W)
    ests = np.array([c.fit_lcc(problem, c.Pilot(np.zeros(2)), seed=s)
                     for s in range(10)])
    # 50% thinning roughly doubles the variance; the mean should sit near the
    # full-data estimate well within a per-coordinate band
    diff = np.abs(ests.mean(axis=0) - res.theta_hat)
    assert diff[0] < 0.15 and diff[1] < 0.6


def test_rank_deficient_subsample_escalates_to_full(caplog):
    import logging
    # a 6-row problem with a zero pilot keeps ~3 rows: some seeds leave
    # fewer than d+1 distinct feature rows and must fall back to the full fit
    problem, theta = make_problem(n=2, m=2, W=1e2)
    pilot = c.Pilot(np.zeros(2))
    hit = False
    with caplog.at_level(logging.WARNING):
        for seed in range(200):
            try:
                theta_s, diag, sub = fit_lcc_diag(problem, pilot, seed)
            except (c.EmptySubsampleError, c.NonConvergenceError,
                    c.DivergenceError):
                continue  # separable or empty draws are not the point here
            if sub.size <= 2:
                hit = True
                break
    assert hit
    assert any("falling back" in rec.message for rec in caplog.records)
    # the escalated update must equal the full fit minus the pilot
    full = c.fit_wlr_fixed_offsets(problem, pilot.theta_tilde)
    np.testing.assert_allclose(theta_s, full - pilot.theta_tilde, atol=1e-10)


def test_subsample_rows_weights_and_offsets():
    problem, theta = make_problem(n=30, m=10)
    sub = c.subsample(problem, c.Pilot(theta), seed=1)
    rows = subsample_rows(problem, sub)
    assert rows.z.sum() == sub.n_cases
    assert np.all(rows.weights[rows.z == 1] == 1.0)
    assert np.all(rows.weights[rows.z == 0] == problem.W)
    # offsets must be the group offsets of the originating rows
    n, m = problem.dataset.n, problem.grid.m
    ctrl_groups = (sub.indices[sub.n_cases:] - n) // m
    np.testing.assert_array_equal(rows.offsets[rows.z == 0],
                                  problem.eta[ctrl_groups])
