import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import regimeswitch as rs
from conftest import hmm_scenario, random_instance


def make_cfg(m, kind, **kw):
    return rs.SaemConfig(m=m, kind=kind, **kw)


def random_stats(rng, n, m):
    """Consistent random statistics: simplex s1 rows, matching s2 and s3."""
    s1 = rng.dirichlet(np.ones(m), size=n)
    s2 = s1[: n - 1].sum(axis=0)
    s3 = s2[:, None] * rng.dirichlet(np.ones(m), size=m)
    return rs.SufficientStats(s1=s1, s2=s2, s3=s3)


def weighted_complete_loglik(theta, sigma2, a, stats, series):
    """Objective the M-step maximizes: weighted emissions over the first n-1
    steps plus transition weights against log a."""
    n = series.n
    w = stats.s1[: n - 1]
    mean = series.lagged[: n - 1, None] * theta[:, 0] + theta[:, 1]
    resid2 = (series.y[: n - 1, None] - mean) ** 2
    emis = (w * (-0.5 * np.log(2 * np.pi * sigma2) - resid2 / (2 * sigma2))).sum()
    with np.errstate(divide="ignore"):
        loga = np.log(a)
    trans = np.where(stats.s3 > 0, stats.s3 * loga, 0.0).sum()
    return float(emis + trans)


def _fd4(f, h):
    """Fourth-order five-point stencil derivative of a scalar map t -> f(t)."""
    return (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h)


def fd_gradient_components(theta, sigma2, a, stats, series, kind):
    """Finite differences in every free coordinate, including reduced
    transition-row coordinates (last column absorbs each perturbation).
    Relative step sizes keep both truncation and cancellation error well
    below the 1e-6 gate."""
    m = theta.shape[0]
    grads = []

    def obj(th, s2_, a_):
        return weighted_complete_loglik(th, s2_, a_, stats, series)

    cols = (1,) if kind is rs.ModelKind.HMM else (0, 1)
    for i in range(m):
        for j in cols:

            def f_theta(t, i=i, j=j):
                bumped = np.array(theta)
                bumped[i, j] += t
                return obj(bumped, sigma2, a)

            grads.append(_fd4(f_theta, 1e-3 * (0.05 + abs(theta[i, j]))))
    grads.append(_fd4(lambda t: obj(theta, sigma2 + t, a), 1e-3 * sigma2))
    for i in range(m):
        for j in range(m - 1):

            def f_row(t, i=i, j=j):
                bumped = np.array(a)
                bumped[i, j] += t
                bumped[i, m - 1] -= t
                return obj(theta, sigma2, bumped)

            grads.append(_fd4(f_row, 1e-3 * min(a[i, j], a[i, m - 1])))
    return np.asarray(grads)


class TestGammaSchedule:
    def test_one_over_t(self):
        cfg = make_cfg(2, "hmm", gamma_schedule=rs.GammaSchedule.ONE_OVER_T, iterations=10, burn_in=0)
        assert rs.gamma_schedule(1, cfg) == 1.0
        assert rs.gamma_schedule(4, cfg) == 0.25

    def test_burn_in_boundary(self):
        cfg = make_cfg(2, "hmm", iterations=300, burn_in=100)
        assert rs.gamma_schedule(100, cfg) == 1.0
        assert rs.gamma_schedule(101, cfg) == 1.0
        assert rs.gamma_schedule(102, cfg) == 0.5

    def test_square_summability_partial_sums(self):
        # Partial sums of gamma^2 stay under pi^2/6 plus the burn-in budget.
        cfg = make_cfg(2, "hmm", iterations=10**6 + 1, burn_in=100)
        ts = np.arange(1, 10**6 + 1)
        gammas = np.where(ts <= 100, 1.0, 1.0 / np.maximum(ts - 100, 1))
        assert np.all((gammas >= 0) & (gammas <= 1))
        assert gammas.sum() > 12.0  # diverging partial sum
        assert (gammas**2).sum() < np.pi**2 / 6 + 100

    def test_rejects_zero_iteration(self):
        cfg = make_cfg(2, "hmm")
        with pytest.raises(rs.InvalidInputError):
            rs.gamma_schedule(0, cfg)


class TestUpdateStats:
    def test_gamma_one_equals_path_statistics(self):
        rng = np.random.default_rng(0)
        path = rng.integers(0, 3, size=12)
        stats = rs.update_stats(rs.SufficientStats.zeros(12, 3), path, 1.0)
        ind = np.zeros((12, 3))
        ind[np.arange(12), path] = 1.0
        np.testing.assert_array_equal(stats.s1, ind)
        np.testing.assert_array_equal(stats.s2, ind[:-1].sum(axis=0))
        assert stats.s3.sum() == 11

    def test_gamma_zero_keeps_stats(self):
        rng = np.random.default_rng(1)
        stats = random_stats(rng, 9, 2)
        path = rng.integers(0, 2, size=9)
        updated = rs.update_stats(stats, path, 0.0)
        np.testing.assert_array_equal(updated.s1, stats.s1)
        np.testing.assert_array_equal(updated.s3, stats.s3)

    def test_constant_path_counts(self):
        n = 15
        stats = rs.update_stats(rs.SufficientStats.zeros(n, 3), np.zeros(n, dtype=int), 1.0)
        np.testing.assert_array_equal(stats.s2, [n - 1, 0, 0])
        assert stats.s3[0, 0] == n - 1
        assert stats.s3.sum() == n - 1

    def test_rejects_gamma_outside_unit_interval(self):
        stats = rs.SufficientStats.zeros(5, 2)
        with pytest.raises(rs.InvalidInputError):
            rs.update_stats(stats, np.zeros(5, dtype=int), 1.5)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10**9), gamma=st.floats(0.0, 1.0), n=st.integers(2, 20))
    def test_invariants_preserved(self, seed, gamma, n):
        rng = np.random.default_rng(seed)
        m = 3
        stats = random_stats(rng, n, m)
        path = rng.integers(0, m, size=n)
        updated = rs.update_stats(stats, path, gamma)
        assert np.all(updated.s1 >= 0) and np.all(updated.s1 <= 1)
        np.testing.assert_allclose(updated.s2, updated.s1[: n - 1].sum(axis=0), atol=1e-8)
        assert updated.s3.sum() == pytest.approx(n - 1, abs=1e-8)
        assert np.all(updated.s3 >= 0)


class TestMstepHmm:
    def test_single_state_mean_and_variance(self):
        _, _, series = random_instance(2, m=1, n=30, kind=rs.ModelKind.HMM)
        n = series.n
        stats = rs.update_stats(rs.SufficientStats.zeros(n, 1), np.zeros(n, dtype=int), 1.0)
        means, sigma2, a = rs.mstep_hmm(stats, series)
        head = series.y[: n - 1]
        assert means[0] == pytest.approx(head.mean(), rel=1e-12)
        assert sigma2 == pytest.approx(head.var(), rel=1e-12)
        assert a[0, 0] == 1.0

    def test_two_group_hard_weights(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=11)
        series = rs.ObservationSeries(y0=0.0, y=y)
        path = np.array([0] * 5 + [1] * 5 + [0])
        stats = rs.update_stats(rs.SufficientStats.zeros(11, 2), path, 1.0)
        means, sigma2, _ = rs.mstep_hmm(stats, series)
        assert means[0] == pytest.approx(y[:5].mean(), rel=1e-12)
        assert means[1] == pytest.approx(y[5:10].mean(), rel=1e-12)
        pooled = ((y[:5] - y[:5].mean()) ** 2).sum() + ((y[5:10] - y[5:10].mean()) ** 2).sum()
        assert sigma2 == pytest.approx(pooled / 10, rel=1e-12)

    def test_stationary_point_of_weighted_objective(self):
        rng = np.random.default_rng(4)
        _, _, series = random_instance(5, m=2, n=60, kind=rs.ModelKind.HMM)
        stats = random_stats(rng, series.n, 2)
        means, sigma2, a = rs.mstep_hmm(stats, series)
        theta = np.column_stack([np.zeros(2), means])
        grads = fd_gradient_components(theta, sigma2, a, stats, series, rs.ModelKind.HMM)
        assert np.max(np.abs(grads)) <= 1e-6

    def test_all_states_empty_raises(self):
        series = rs.ObservationSeries(y0=0.0, y=np.arange(1.0, 6.0))
        with pytest.raises(rs.DegenerateStatsError):
            rs.mstep_hmm(rs.SufficientStats.zeros(5, 2), series)

    def test_empty_state_keeps_previous_theta(self):
        _, _, series = random_instance(6, m=1, n=12, kind=rs.ModelKind.HMM)
        path = np.zeros(12, dtype=int)
        stats = rs.update_stats(rs.SufficientStats.zeros(12, 2), path, 1.0)
        prev = np.array([[0.0, -5.0], [0.0, 9.5]])
        means, _, a = rs.mstep_hmm(stats, series, prev_theta=prev)
        assert means[1] == 9.5
        np.testing.assert_allclose(a[1], [0.5, 0.5])


class TestMstepAr:
    def test_single_state_matches_ols(self):
        _, _, series = random_instance(7, m=1, n=40)
        n = series.n
        stats = rs.update_stats(rs.SufficientStats.zeros(n, 1), np.zeros(n, dtype=int), 1.0)
        theta, sigma2, _ = rs.mstep_ar(stats, series)
        x = series.lagged[: n - 1]
        y = series.y[: n - 1]
        design = np.column_stack([x, np.ones(n - 1)])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        assert theta[0, 0] == pytest.approx(coef[0], rel=1e-10)
        assert theta[0, 1] == pytest.approx(coef[1], rel=1e-10)

    def test_noiseless_line_recovered_exactly(self):
        a_true, b_true = 0.6, -1.2
        y = np.empty(20)
        prev = 0.7
        for k in range(20):
            prev = a_true * prev + b_true
            y[k] = prev
        series = rs.ObservationSeries(y0=0.7, y=y)
        stats = rs.update_stats(rs.SufficientStats.zeros(20, 1), np.zeros(20, dtype=int), 1.0)
        theta, sigma2, _ = rs.mstep_ar(stats, series)
        assert theta[0, 0] == pytest.approx(a_true, abs=1e-9)
        assert theta[0, 1] == pytest.approx(b_true, abs=1e-9)
        assert sigma2 <= 1e-20

    def test_stationary_point_of_weighted_objective(self):
        rng = np.random.default_rng(8)
        _, _, series = random_instance(9, m=2, n=80)
        stats = random_stats(rng, series.n, 2)
        theta, sigma2, a = rs.mstep_ar(stats, series)
        grads = fd_gradient_components(theta, sigma2, a, stats, series, rs.ModelKind.LINEAR_AR)
        assert np.max(np.abs(grads)) <= 1e-6

    def test_singular_design_names_state(self):
        y = np.full(10, 2.0)
        series = rs.ObservationSeries(y0=2.0, y=y)  # constant lag: no spread
        stats = rs.update_stats(rs.SufficientStats.zeros(10, 1), np.zeros(10, dtype=int), 1.0)
        with pytest.raises(rs.DegenerateDesignError, match="state 0"):
            rs.mstep_ar(stats, series)

    def test_transition_rows_clamped_and_stochastic(self):
        rng = np.random.default_rng(10)
        _, _, series = random_instance(11, m=3, n=50)
        path = rng.integers(0, 2, size=50)  # state 2 never visited
        stats = rs.update_stats(rs.SufficientStats.zeros(50, 3), path, 1.0)
        _, _, a = rs.mstep_ar(stats, series, prev_theta=np.zeros((3, 2)))
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)
        assert a.min() >= 1e-6


class TestSaemFit:
    def test_deterministic_given_seed(self):
        _, _, series = random_instance(12, m=2, n=80, kind=rs.ModelKind.HMM)
        cfg = make_cfg(2, "hmm", iterations=60, seed=4)
        f1 = rs.saem_fit(series, cfg)
        f2 = rs.saem_fit(series, cfg)
        np.testing.assert_array_equal(f1.trajectory, f2.trajectory)
        assert f1.loglik == f2.loglik

    def test_loglik_matches_forward_filter(self):
        _, _, series = random_instance(13, m=2, n=80, kind=rs.ModelKind.HMM)
        fit = rs.saem_fit(series, make_cfg(2, "hmm", iterations=80, seed=1))
        assert fit.loglik == pytest.approx(rs.forward_filter(fit.spec, series).loglik, abs=1e-10)

    def test_result_is_canonical(self):
        _, _, series = random_instance(14, m=3, n=150, kind=rs.ModelKind.HMM)
        fit = rs.saem_fit(series, make_cfg(3, "hmm", iterations=150, seed=2))
        assert np.all(np.diff(fit.spec.intercepts) >= 0)

    def test_provided_init_with_tiny_noise_stays_near_truth(self):
        truth = rs.ModelSpec(m=2, kind="hmm", theta=[[0, -3.0], [0, 3.0]], sigma2=0.01,
                             a=[[0.9, 0.1], [0.1, 0.9]])
        rng = np.random.default_rng(15)
        _, series = rs.simulate(truth, 300, y0=0.0, rng=rng)
        cfg = make_cfg(2, "hmm", iterations=200, seed=3, init=truth)
        fit = rs.saem_fit(series, cfg)
        drift = np.abs(fit.trajectory - rs.flatten_params(truth)[None, :]).max()
        assert drift <= 0.1

    def test_recovers_linear_scenario(self):
        truth = rs.ModelSpec(m=2, kind="linear_ar", theta=[[1.0, -1.0], [-0.5, 0.5]],
                             sigma2=1.5, a=[[0.9, 0.1], [0.1, 0.9]])
        passes = 0
        for rep in range(20):
            rng = np.random.default_rng(600_000 + rep)
            _, series = rs.simulate(truth, 500, y0=0.0, rng=rng)
            fit = rs.saem_fit(series, make_cfg(2, "linear_ar", iterations=800, seed=rep))
            ok = (np.all(np.abs(fit.spec.slopes - truth.slopes) <= 0.15)
                  and np.all(np.abs(fit.spec.intercepts - truth.intercepts) <= 0.3))
            passes += ok
        assert passes >= 16

    def test_trajectory_records_schedule(self):
        _, _, series = random_instance(16, m=2, n=60, kind=rs.ModelKind.HMM)
        cfg = make_cfg(2, "hmm", iterations=40, burn_in=10, seed=0)
        fit = rs.saem_fit(series, cfg)
        assert fit.gammas[0] == 1.0
        assert fit.gammas[10] == 1.0  # t = 11, first decay step
        assert fit.gammas[11] == 0.5
        filled = np.isfinite(fit.trajectory_loglik)
        assert filled[9] and filled[19] and filled[-1]
        assert not filled[0]


class TestEmFit:
    def test_monotone_loglik(self):
        for seed in range(6):
            kind = rs.ModelKind.HMM if seed % 2 == 0 else rs.ModelKind.LINEAR_AR
            _, _, series = random_instance(100 + seed, m=2, n=60, kind=kind)
            fit = rs.em_fit(series, make_cfg(2, kind, iterations=60, seed=seed))
            lls = fit.trajectory_loglik[np.isfinite(fit.trajectory_loglik)]
            assert np.all(np.diff(lls) >= -1e-9)

    def test_single_state_closed_form(self):
        _, _, series = random_instance(17, m=1, n=50, kind=rs.ModelKind.HMM)
        fit = rs.em_fit(series, make_cfg(1, "hmm", iterations=10, seed=0))
        assert fit.spec.intercepts[0] == pytest.approx(series.y.mean(), rel=1e-12)
        assert fit.spec.sigma2 == pytest.approx(series.y.var(), rel=1e-10)
        assert fit.converged

    def test_agrees_with_saem_on_scenario(self):
        truth = hmm_scenario()
        close = 0
        for rep in range(20):
            rng = np.random.default_rng(300 + rep)
            _, series = rs.simulate(truth, 400, y0=0.0, rng=rng)
            sfit = rs.saem_fit(series, make_cfg(3, "hmm", iterations=500, seed=rep))
            efit = rs.em_fit(series, make_cfg(3, "hmm", iterations=400, seed=rep))
            if abs(sfit.loglik - efit.loglik) <= 0.5:
                close += 1
        assert close >= 16

    def test_em_polish_never_hurts(self):
        _, _, series = random_instance(18, m=2, n=120, kind=rs.ModelKind.LINEAR_AR)
        saem = rs.saem_fit(series, make_cfg(2, "linear_ar", iterations=120, seed=5))
        polished = rs.em_fit(series, make_cfg(2, "linear_ar", iterations=100, seed=5, init=saem.spec))
        assert polished.loglik >= saem.loglik - 1e-9


class TestParamFlattening:
    def test_names_align_with_values(self):
        spec = hmm_scenario()
        names = rs.param_names(3)
        values = rs.flatten_params(spec)
        assert len(names) == values.size == 2 * 3 + 1 + 9
        assert values[names.index("sigma2")] == spec.sigma2
        assert values[names.index("a_0_0")] == spec.a[0, 0]
        assert values[names.index("intercept_2")] == spec.intercepts[2]
