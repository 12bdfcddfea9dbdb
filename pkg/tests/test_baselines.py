import numpy as np
import pytest

from robust_sbl.baselines import (
    GaussianLikelihood,
    estimate_noise_variance,
    fit_baseline,
    fit_estimator,
)
from robust_sbl.engine import FitConfig, fit_correntropy, map_predictor
from robust_sbl.glm import Dataset, predict


class TestEstimateNoiseVariance:
    def test_simple(self):
        assert estimate_noise_variance(np.array([1.0, -1.0]), 0) == pytest.approx(1.0)

    def test_all_zero(self):
        assert estimate_noise_variance(np.zeros(10), 0) == 0.0

    def test_matches_reference_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            e = rng.standard_normal(rng.integers(5, 50))
            dof = float(rng.uniform(0, len(e) - 1))
            assert estimate_noise_variance(e, dof) == pytest.approx(
                np.sum(e**2) / (len(e) - dof), rel=1e-12
            )

    def test_rejects_dof_at_least_n(self):
        with pytest.raises(ValueError):
            estimate_noise_variance(np.ones(3), 3)

    def test_rejects_negative_dof(self):
        with pytest.raises(ValueError):
            estimate_noise_variance(np.ones(3), -1)


class TestGaussianBaseline:
    def test_noiseless_support_recovery(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((50, 5))
        w_true = np.array([1.0, 0, 0, 0, 0])
        data = Dataset(x=x, t=x @ w_true, task="regression")
        state, report = fit_baseline(data, "sbl-gaussian", FitConfig())
        assert set(state.active.indices) <= {0}
        assert abs(state.w_star[0] - 1.0) < 1e-2
        assert np.all(state.w_star[1:] == 0.0)

    def test_vanishing_prior_matches_least_squares(self):
        # the exact posterior-mean step at a -> 0 on a well-conditioned
        # problem reduces to ordinary least squares
        rng = np.random.default_rng(2)
        x = rng.standard_normal((40, 5))
        t = x @ rng.standard_normal(5) + rng.normal(0, 0.1, 40)
        cfg = FitConfig(noise_variance=0.01)
        lik = GaussianLikelihood(cfg)
        lik.prepare(x, t, np.zeros(5))
        w = lik.w_step(x, t, np.zeros(5), np.full(5, 1e-8))
        w_ls = np.linalg.lstsq(x, t, rcond=None)[0]
        assert np.allclose(w, w_ls, rtol=1e-4)

    def test_fixed_noise_variance_is_respected(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((30, 3))
        t = x[:, 0] + rng.normal(0, 0.5, 30)
        data = Dataset(x=x, t=t, task="regression")
        cfg = FitConfig(noise_variance=0.25)
        state, report = fit_baseline(data, "sbl-gaussian", cfg)
        assert report.iterations_used >= 1

    def test_allowed_on_classification_data(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((30, 3))
        t = (x[:, 0] > 0).astype(float)
        data = Dataset(x=x, t=t, task="classification")
        state, _ = fit_baseline(data, "sbl-gaussian", FitConfig())
        assert state.w_star.shape == (3,)


class TestBinomialBaseline:
    def test_separable_data_reaches_full_accuracy(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((40, 2))
        t = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(float)
        data = Dataset(x=x, t=t, task="classification")
        state, _ = fit_baseline(data, "sbl-binomial", FitConfig())
        pred = predict(map_predictor(state, "logistic"), x)
        assert np.mean((pred >= 0.5) == t) == 1.0

    def test_rejects_regression_task(self):
        data = Dataset(x=np.ones((3, 1)), t=np.array([0.5, 1.5, 2.0]), task="regression")
        with pytest.raises(ValueError, match="classification"):
            fit_baseline(data, "sbl-binomial", FitConfig())


class TestSbclBaseline:
    def test_matches_correntropy_engine(self):
        rng = np.random.default_rng(6)
        for seed in range(10):
            r = np.random.default_rng(seed)
            n, d = 25, 4
            x = r.standard_normal((n, d))
            t = x @ np.array([1.0, 0, -0.5, 0]) + r.normal(0, 0.2, n)
            data = Dataset(x=x, t=t, task="regression")
            cfg = FitConfig(sigma=1.0)
            s1, _ = fit_baseline(data, "sbcl", cfg)
            s2, _ = fit_correntropy(data, cfg)
            assert np.allclose(s1.w_star, s2.w_star, atol=1e-8)

    def test_single_element_codebook(self):
        rng = np.random.default_rng(7)
        data = Dataset(x=rng.standard_normal((20, 3)), t=rng.standard_normal(20), task="regression")
        state, _ = fit_baseline(data, "sbcl", FitConfig())
        assert state.codebook.size == 1
        assert state.codebook.elements[0] == 0.0
        assert state.codebook.total == 20


class TestSharedReportSchema:
    @pytest.mark.parametrize("kind", ["sbl-gaussian", "sbcl"])
    def test_reports_have_common_fields(self, kind):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((30, 6))
        t = x[:, 0] - x[:, 4] + rng.normal(0, 0.1, 30)
        data = Dataset(x=x, t=t, task="regression")
        state, report = fit_baseline(data, kind, FitConfig())
        assert len(report.objective_trace) == report.iterations_used
        for it, d in report.pruned_per_iter:
            assert state.w_star[d] == 0.0
            assert not state.active.mask[d]
        assert report.wall_time_s > 0
        assert report.config.a_max == 1e6

    def test_pruning_monotone_all_kinds(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((40, 8))
        t = (x[:, 1] > 0).astype(float)
        data = Dataset(x=x, t=t, task="classification")
        for kind in ("sbl-binomial", "sbcl"):
            _, report = fit_baseline(data, kind, FitConfig())
            dims = [d for _, d in report.pruned_per_iter]
            assert len(dims) == len(set(dims))


class TestFitEstimatorDispatch:
    def test_unknown_kind(self):
        data = Dataset(x=np.ones((2, 1)), t=np.zeros(2), task="regression")
        with pytest.raises(ValueError, match="unknown baseline kind"):
            fit_estimator(data, "gradient-boost")

    def test_dispatches_to_mee(self):
        rng = np.random.default_rng(10)
        data = Dataset(x=rng.standard_normal((20, 2)), t=rng.standard_normal(20), task="regression")
        s1, _ = fit_estimator(data, "sbl-mee", FitConfig(sigma=1.0))
        assert s1.codebook is not None and not s1.codebook.restricted
