import numpy as np
import pytest

from robust_sbl.engine import (
    FitConfig,
    MeeLikelihood,
    NumericalError,
    _initial_weights,
    expected_w_sq,
    fit_correntropy,
    fit_sbl_mee,
    map_predictor,
    negative_hessian,
    optimize_w,
    penalized_gradient,
    penalized_objective,
    run_variational_loop,
    update_relevance,
)
from robust_sbl.entropy import Codebook, build_codebook, restricted_codebook
from robust_sbl.glm import Dataset, predict


def random_regression_problem(rng, n=None, d=None):
    n = n if n is not None else int(rng.integers(5, 20))
    d = d if d is not None else int(rng.integers(1, 5))
    x = rng.standard_normal((n, d))
    t = rng.standard_normal(n)
    w = rng.standard_normal(d) * 0.5
    cb = build_codebook(rng.standard_normal(n), 0.3)
    a = rng.uniform(0.2, 3.0, d)
    sigma = rng.uniform(0.5, 2.0)
    return x, t, w, cb, a, sigma


def random_classification_problem(rng, n=None, d=None):
    n = n if n is not None else int(rng.integers(5, 20))
    d = d if d is not None else int(rng.integers(1, 5))
    x = rng.standard_normal((n, d))
    t = (rng.random(n) > 0.5).astype(float)
    w = rng.standard_normal(d) * 0.5
    cb = restricted_codebook(rng.uniform(-0.95, 0.95, max(n, 3)))
    a = rng.uniform(0.2, 3.0, d)
    sigma = rng.uniform(0.5, 2.0)
    return x, t, w, cb, a, sigma


def fd_gradient(x, t, link, cb, sigma, a, w, h=1e-6):
    g = np.zeros_like(w)
    for i in range(len(w)):
        ei = np.zeros_like(w)
        ei[i] = h
        g[i] = (
            penalized_objective(x, t, link, cb, sigma, a, w + ei)
            - penalized_objective(x, t, link, cb, sigma, a, w - ei)
        ) / (2 * h)
    return g


def fd_neg_hessian(x, t, link, cb, sigma, a, w, h=1e-5):
    d = len(w)
    out = np.zeros((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        gp = penalized_gradient(x, t, link, cb, sigma, a, w + ei)
        gm = penalized_gradient(x, t, link, cb, sigma, a, w - ei)
        out[:, i] = -(gp - gm) / (2 * h)
    return 0.5 * (out + out.T)


class TestGradient:
    @pytest.mark.parametrize("link", ["identity", "logistic"])
    def test_matches_finite_differences(self, link):
        rng = np.random.default_rng(10)
        for _ in range(25):
            if link == "identity":
                x, t, w, cb, a, sigma = random_regression_problem(rng)
            else:
                x, t, w, cb, a, sigma = random_classification_problem(rng)
            g = penalized_gradient(x, t, link, cb, sigma, a, w)
            g_fd = fd_gradient(x, t, link, cb, sigma, a, w)
            assert np.linalg.norm(g - g_fd) <= 1e-5 * max(np.linalg.norm(g_fd), 1e-12)

    def test_empty_data_is_pure_penalty(self):
        cb = Codebook(np.array([0.0]), np.array([1]))
        a = np.array([2.0, 3.0])
        w = np.array([1.0, -1.0])
        g = penalized_gradient(np.empty((0, 2)), np.empty(0), "identity", cb, 1.0, a, w)
        assert np.allclose(g, -a * w)


class TestNegativeHessian:
    @pytest.mark.parametrize("link", ["identity", "logistic"])
    def test_matches_finite_differenced_gradients(self, link):
        rng = np.random.default_rng(11)
        for _ in range(25):
            if link == "identity":
                x, t, w, cb, a, sigma = random_regression_problem(rng)
            else:
                x, t, w, cb, a, sigma = random_classification_problem(rng)
            h = negative_hessian(x, t, link, cb, sigma, a, w)
            h_fd = fd_neg_hessian(x, t, link, cb, sigma, a, w)
            assert np.linalg.norm(h - h_fd) <= 1e-3 * np.linalg.norm(h_fd)

    def test_empty_data_gives_prior_precision(self):
        cb = Codebook(np.array([0.0]), np.array([1]))
        a = np.array([1.5, 2.5])
        h = negative_hessian(np.empty((0, 2)), np.empty(0), "identity", cb, 1.0, a, np.zeros(2))
        assert np.allclose(h, np.diag(a))

    def test_identity_second_derivative_term_vanishes(self):
        # the identity link has no curvature term, so the Hessian reduces to
        # the weighted Gram matrix plus the prior diagonal
        rng = np.random.default_rng(12)
        x, t, w, cb, a, sigma = random_regression_problem(rng, n=12, d=3)
        e = t - x @ w
        u = e[:, None] - cb.elements[None, :]
        phi = cb.counts * np.exp(-(u**2) / (2 * sigma**2))
        psi = (phi * (1 - u**2 / sigma**2)).sum(axis=1) / sigma**2
        manual = x.T @ (x * psi[:, None]) + np.diag(a)
        h = negative_hessian(x, t, "identity", cb, sigma, a, w)
        assert np.allclose(h, manual, rtol=1e-12)

    def test_ensure_pd_applies_jitter(self):
        # residuals near 2 kernel widths make the curvature term negative
        x = np.array([[1.0], [1.0]])
        t = np.array([10.0, 10.0])
        cb = Codebook(np.array([0.0]), np.array([2]))
        a = np.array([1e-12])
        h = negative_hessian(x, t, "identity", cb, 5.0, a, np.zeros(1))
        assert h[0, 0] < 0
        h_pd = negative_hessian(x, t, "identity", cb, 5.0, a, np.zeros(1), ensure_pd=True)
        assert np.all(np.linalg.eigvalsh(h_pd) > 0)


class TestOptimizeW:
    def test_empty_data_returns_zero(self):
        cb = Codebook(np.array([0.0]), np.array([1]))
        w = optimize_w(np.empty((0, 3)), np.empty(0), "identity", cb, 1.0, np.ones(3),
                       np.array([1.0, -2.0, 0.5]))
        assert np.allclose(w, 0.0)

    def test_identity_grid_search_oracle(self):
        x = np.ones((3, 1))
        t = np.ones(3)
        cb = Codebook(np.array([0.0]), np.array([3]))
        a = np.array([0.1])
        w_star = optimize_w(x, t, "identity", cb, 1.0, a, np.zeros(1))
        grid = np.arange(-3.0, 3.0 + 1e-12, 1e-4)
        j = 9.0 * np.exp(-((1.0 - grid) ** 2) / 2.0) - 0.05 * grid**2
        assert abs(w_star[0] - grid[np.argmax(j)]) < 1e-3

    def test_sign_symmetry(self):
        # negating x and t mirrors the errors, so with a symmetric codebook
        # the objective landscape in w is unchanged
        rng = np.random.default_rng(13)
        x = rng.standard_normal((15, 2))
        t = rng.standard_normal(15)
        cb = Codebook(np.array([0.0]), np.array([15]))
        a = np.array([0.5, 0.8])
        w_pos = optimize_w(x, t, "identity", cb, 1.0, a, np.zeros(2))
        w_neg = optimize_w(-x, -t, "identity", cb, 1.0, a, np.zeros(2))
        assert np.allclose(w_pos, w_neg, atol=1e-10)

    @pytest.mark.parametrize("link", ["identity", "logistic"])
    def test_objective_never_decreases(self, link):
        rng = np.random.default_rng(14)
        for _ in range(10):
            if link == "identity":
                x, t, w0, cb, a, sigma = random_regression_problem(rng)
            else:
                x, t, w0, cb, a, sigma = random_classification_problem(rng)
            trace = []
            w = optimize_w(x, t, link, cb, sigma, a, w0, trace=trace)
            j0 = penalized_objective(x, t, link, cb, sigma, a, w0)
            j_star = penalized_objective(x, t, link, cb, sigma, a, w)
            assert j_star >= j0 - 1e-12
            assert all(b >= a_ - 1e-9 for a_, b in zip(trace, trace[1:]))

    def test_gradient_small_at_solution(self):
        rng = np.random.default_rng(15)
        x, t, w0, cb, a, sigma = random_regression_problem(rng, n=20, d=3)
        w = optimize_w(x, t, "identity", cb, sigma, a, w0, tol=1e-10)
        g = penalized_gradient(x, t, "identity", cb, sigma, a, w)
        assert np.linalg.norm(g) < 1e-5 * max(1.0, np.linalg.norm(x.T @ t))

    def test_rejects_nonpositive_relevance(self):
        cb = Codebook(np.array([0.0]), np.array([2]))
        with pytest.raises(ValueError):
            optimize_w(np.ones((2, 1)), np.ones(2), "identity", cb, 1.0, np.array([0.0]))

    def test_nonfinite_objective_raises_with_iteration(self):
        # a start point whose penalty overflows makes the objective -inf
        cb = Codebook(np.array([0.0]), np.array([2]))
        with pytest.raises(NumericalError) as exc:
            optimize_w(np.ones((2, 1)), np.ones(2), "identity", cb, 1.0,
                       np.array([1.0]), np.array([1e200]))
        assert exc.value.iteration == 0


class TestExpectedWSq:
    def test_zero(self):
        assert expected_w_sq(0.0, 0.0) == 0.0

    def test_direct_sum(self):
        assert expected_w_sq(2.0, 0.5) == pytest.approx(4.5)

    def test_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            expected_w_sq(1.0, -0.1)

    def test_monte_carlo_second_moment(self):
        rng = np.random.default_rng(16)
        mu, var = 0.7, 0.3
        samples = rng.normal(mu, np.sqrt(var), size=10**6)
        mc = float(np.mean(samples**2))
        se = float(np.std(samples**2) / np.sqrt(10**6))
        assert abs(expected_w_sq(mu, var) - mc) < 3 * se


class TestUpdateRelevance:
    def test_slow_simple(self):
        assert update_relevance(1.0, 1.0, 0.0, "slow") == pytest.approx(1.0)

    def test_fast_zero_weight_prunes(self):
        assert update_relevance(2.0, 0.0, 0.1, "fast", a_max=1e6) == 1e6

    def test_fast_nonpositive_numerator_prunes(self):
        assert update_relevance(10.0, 1.0, 0.2, "fast", a_max=1e6) == 1e6

    def test_fixed_point_identity(self):
        rng = np.random.default_rng(17)
        w = rng.uniform(-3, 3, 10**5)
        w[np.abs(w) < 1e-3] = 1.0
        h = rng.uniform(0.0, 2.0, 10**5)
        a_fixed = 1.0 / (w**2 + h)
        fast = update_relevance(a_fixed, w, h, "fast")
        slow = update_relevance(a_fixed, w, h, "slow")
        assert np.allclose(fast, slow, rtol=1e-12)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            update_relevance(1.0, 1.0, 1.0, "warp")


class TestFitSblMee:
    def test_noiseless_identity_recovers_single_support(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((50, 5))
        t = x @ np.array([1.0, 0.0, 0.0, 0.0, 0.0])
        data = Dataset(x=x, t=t, task="regression")
        state, report = fit_sbl_mee(data, FitConfig(sigma=1.0))
        active = set(state.active.indices)
        assert active <= {0}
        if 0 in active:
            assert abs(state.w_star[0] - 1.0) < 1e-2
        assert np.all(state.w_star[1:] == 0.0)

    def test_iteration_cap(self):
        rng = np.random.default_rng(43)
        x = rng.standard_normal((20, 3))
        t = rng.standard_normal(20)
        data = Dataset(x=x, t=t, task="regression")
        state, report = fit_sbl_mee(data, FitConfig(max_outer_iters=1))
        assert report.iterations_used == 1
        assert len(report.objective_trace) == 1

    def test_pruning_permanence(self):
        rng = np.random.default_rng(44)
        x = rng.standard_normal((40, 10))
        t = x[:, 0] * 2.0 + rng.normal(0, 0.1, 40)
        data = Dataset(x=x, t=t, task="regression")
        state, report = fit_sbl_mee(data, FitConfig(sigma=5.0))
        pruned_dims = [d for _, d in report.pruned_per_iter]
        assert len(pruned_dims) == len(set(pruned_dims))  # never pruned twice
        for d in pruned_dims:
            assert state.w_star[d] == 0.0
            assert not state.active.mask[d]
            assert state.a_expect[d] >= report.config.a_max

    def test_active_set_never_grows(self):
        rng = np.random.default_rng(45)
        x = rng.standard_normal((30, 8))
        t = x[:, 1] - x[:, 3] + rng.normal(0, 0.05, 30)
        data = Dataset(x=x, t=t, task="regression")
        state, report = fit_sbl_mee(data, FitConfig(sigma=2.0))
        seen = set()
        last_iter = 0
        for it, d in report.pruned_per_iter:
            assert it >= last_iter  # events recorded in iteration order
            assert d not in seen
            seen.add(d)
            last_iter = it

    def test_all_pruned_gives_valid_empty_state(self):
        rng = np.random.default_rng(46)
        x = rng.standard_normal((20, 4))
        t = rng.standard_normal(20)
        data = Dataset(x=x, t=t, task="regression")
        state, report = fit_sbl_mee(data, FitConfig(a_max=1e-3))
        assert report.all_pruned
        assert state.active.n_active == 0
        assert np.all(state.w_star == 0.0)

    def test_classification_uses_restricted_codebook(self):
        rng = np.random.default_rng(47)
        x = rng.standard_normal((60, 6))
        w_true = np.array([2.0, -2.0, 0, 0, 0, 0.0])
        p = 1 / (1 + np.exp(-(x @ w_true)))
        t = (rng.random(60) < p).astype(float)
        data = Dataset(x=x, t=t, task="classification")
        state, report = fit_sbl_mee(data, FitConfig(sigma=1.0))
        assert state.codebook.restricted
        assert np.allclose(state.codebook.elements, [0.0, -1.0, 1.0])
        assert state.codebook.total == 60

    def test_regression_codebook_respects_auto_threshold(self):
        rng = np.random.default_rng(48)
        x = rng.standard_normal((50, 5))
        t = x[:, 0] + rng.normal(0, 0.3, 50)
        data = Dataset(x=x, t=t, task="regression")
        state, report = fit_sbl_mee(data, FitConfig(sigma=1.0))
        assert all(1 <= size <= 20 for size in report.codebook_sizes)

    def test_posterior_state_invariants(self):
        rng = np.random.default_rng(49)
        x = rng.standard_normal((40, 6))
        t = x[:, 2] * 1.5 + rng.normal(0, 0.1, 40)
        data = Dataset(x=x, t=t, task="regression")
        state, report = fit_sbl_mee(data, FitConfig(sigma=3.0))
        mask = state.active.mask
        assert np.all(state.w_star[~mask] == 0.0)
        assert np.all(state.h_inv_diag[~mask] == 0.0)
        assert np.all(state.a_expect[~mask] >= report.config.a_max)
        assert np.all(state.a_expect[mask] > 0)
        assert np.all(np.isfinite(state.a_expect[mask]))
        assert np.all(state.h_inv_diag[mask] >= 0)

    def test_wall_time_recorded(self):
        rng = np.random.default_rng(50)
        data = Dataset(x=rng.standard_normal((10, 2)), t=rng.standard_normal(10), task="regression")
        _, report = fit_sbl_mee(data, FitConfig(max_outer_iters=2))
        assert report.wall_time_s > 0


class TestCorrentropySpecialCase:
    def test_forced_codebook_equals_correntropy_fit(self):
        rng = np.random.default_rng(51)
        for _ in range(5):
            n, d = 25, 4
            x = rng.standard_normal((n, d))
            t = x @ (rng.standard_normal(d) * [1, 0, 1, 0]) + rng.normal(0, 0.2, n)
            data = Dataset(x=x, t=t, task="regression")
            cfg = FitConfig(sigma=1.0)
            cb = Codebook(np.array([0.0]), np.array([n]))
            likelihood = MeeLikelihood("identity", cfg, codebook=cb, rebuild=False)
            w0 = _initial_weights(x, t, "identity")
            s1, _ = run_variational_loop(x, t, likelihood, cfg, w0)
            s2, _ = fit_correntropy(data, cfg)
            assert np.allclose(s1.w_star, s2.w_star, atol=1e-8)

    def test_forced_codebook_objective_is_correntropy_sum(self):
        rng = np.random.default_rng(52)
        n = 15
        x = rng.standard_normal((n, 3))
        t = rng.standard_normal(n)
        w = rng.standard_normal(3)
        a = np.ones(3)
        cb = Codebook(np.array([0.0]), np.array([n]))
        j = penalized_objective(x, t, "identity", cb, 1.0, a, w)
        e = t - x @ w
        correntropy = np.exp(-(e**2) / 2.0).sum()
        assert j == pytest.approx(n * correntropy - 0.5 * float(a @ (w * w)), rel=1e-12)


class TestMapPredictor:
    def test_empty_state_gives_zero_model(self):
        rng = np.random.default_rng(53)
        data = Dataset(x=rng.standard_normal((20, 4)), t=rng.standard_normal(20), task="regression")
        state, _ = fit_sbl_mee(data, FitConfig(a_max=1e-3))
        model = map_predictor(state, "identity")
        assert np.all(model.w == 0.0)
        assert predict(model, data.x[0]) == 0.0

    def test_round_trip_weights(self):
        rng = np.random.default_rng(54)
        x = rng.standard_normal((30, 3))
        t = x[:, 0] + rng.normal(0, 0.05, 30)
        data = Dataset(x=x, t=t, task="regression")
        state, _ = fit_sbl_mee(data, FitConfig(sigma=1.0))
        model = map_predictor(state, "identity")
        assert np.array_equal(model.w, state.w_star)

    def test_noiseless_fit_correlates_with_targets(self):
        rng = np.random.default_rng(55)
        x = rng.standard_normal((40, 1))
        t = x[:, 0] * 2.0
        data = Dataset(x=x, t=t, task="regression")
        state, _ = fit_sbl_mee(data, FitConfig(sigma=1.0))
        pred = predict(map_predictor(state, "identity"), x)
        corr = np.corrcoef(pred, t)[0, 1]
        assert corr >= 0.99


class TestFitConfig:
    def test_defaults_match_protocol(self):
        cfg = FitConfig()
        assert cfg.a_max == 1e6
        assert cfg.max_outer_iters == 300
        assert cfg.epsilon == "auto"

    def test_validation(self):
        with pytest.raises(ValueError):
            FitConfig(sigma=0.0)
        with pytest.raises(ValueError):
            FitConfig(a_max=-1.0)
        with pytest.raises(ValueError):
            FitConfig(relevance_update="sideways")
        with pytest.raises(ValueError):
            FitConfig(epsilon=-0.5)
