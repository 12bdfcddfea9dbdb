"""Scikit-learn style estimators wrapping the variational engine.

All estimators share the same hyperparameters (kernel bandwidth, pruning
threshold, iteration limits) and expose the fitted sparse solution through
``coef_``, ``active_mask_`` and ``relevance_``.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .baselines import SBCL, SBL_BINOMIAL, SBL_GAUSSIAN, SBL_MEE, fit_estimator
from .engine import FitConfig, map_predictor
from .glm import CLASSIFICATION, REGRESSION, Dataset
from .glm import predict as glm_predict


class _BaseSparseBayes(BaseEstimator):
    """Shared plumbing: hyperparameters, validation, fit dispatch."""

    _estimator_kind = None
    _task = None

    def __init__(self, sigma=1.0, epsilon="auto", a_max=1e6, max_iter=300,
                 tol=1e-4, w_step_max_iter=100, w_step_tol=1e-6,
                 relevance_update="fast", hessian_jitter=1e-8,
                 noise_variance=None, seed=0):
        self.sigma = sigma
        self.epsilon = epsilon
        self.a_max = a_max
        self.max_iter = max_iter
        self.tol = tol
        self.w_step_max_iter = w_step_max_iter
        self.w_step_tol = w_step_tol
        self.relevance_update = relevance_update
        self.hessian_jitter = hessian_jitter
        self.noise_variance = noise_variance
        self.seed = seed

    def _fit_config(self):
        return FitConfig(
            sigma=self.sigma,
            epsilon=self.epsilon,
            a_max=self.a_max,
            max_outer_iters=self.max_iter,
            outer_tol=self.tol,
            w_step_max_iters=self.w_step_max_iter,
            w_step_tol=self.w_step_tol,
            relevance_update=self.relevance_update,
            hessian_jitter=self.hessian_jitter,
            noise_variance=self.noise_variance,
            seed=self.seed,
        )

    def _fit_dataset(self, dataset):
        state, report = fit_estimator(dataset, self._estimator_kind, self._fit_config())
        self.state_ = state
        self.report_ = report
        self.coef_ = state.w_star
        self.relevance_ = state.a_expect
        self.posterior_var_ = state.h_inv_diag
        self.active_mask_ = state.active.mask
        self.n_iter_ = report.iterations_used
        self.converged_ = report.converged
        self.n_features_in_ = dataset.n_features
        return self

    @property
    def active_indices_(self):
        check_is_fitted(self, "coef_")
        return np.flatnonzero(self.active_mask_)


class _SparseRegressorBase(RegressorMixin, _BaseSparseBayes):
    _task = REGRESSION

    def fit(self, X, y):
        """Fit the regressor.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
        y : array-like of shape (n_samples,)

        Returns
        -------
        self
        """
        X, y = check_X_y(X, y, y_numeric=True, dtype="float64")
        return self._fit_dataset(Dataset(x=X, t=y, task=REGRESSION))

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype="float64")
        return glm_predict(map_predictor(self.state_, "identity"), X)


class _SparseClassifierBase(ClassifierMixin, _BaseSparseBayes):
    _task = CLASSIFICATION

    def fit(self, X, y):
        """Fit the classifier on binary targets.

        Arbitrary two-class labels are accepted and encoded as 0/1 in the
        order given by ``numpy.unique``.

        Returns
        -------
        self
        """
        X, y = check_X_y(X, y, dtype="float64")
        classes = np.unique(y)
        if classes.shape[0] != 2:
            raise ValueError(f"expected exactly 2 classes, got {classes.shape[0]}")
        self.classes_ = classes
        encoded = (y == classes[1]).astype(float)
        return self._fit_dataset(Dataset(x=X, t=encoded, task=CLASSIFICATION))

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype="float64")
        return X @ self.coef_

    def predict_proba(self, X):
        """Class-membership probabilities, columns ordered as ``classes_``."""
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype="float64")
        p1 = glm_predict(map_predictor(self.state_, "logistic"), X)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        """Predicted labels; probability 0.5 maps to the positive class."""
        proba = self.predict_proba(X)[:, 1]
        return np.where(proba >= 0.5, self.classes_[1], self.classes_[0])


class SBLMEERegressor(_SparseRegressorBase):
    """Sparse Bayesian regression with a quantized error-entropy likelihood.

    The prediction errors are summarized by a residual-driven codebook
    (re-quantized whenever the weights move) and the model is fitted by
    alternating Laplace-approximated weight updates with automatic relevance
    determination; dimensions whose prior precision reaches ``a_max`` are
    pruned permanently.

    Parameters
    ----------
    sigma : float, default=1.0
        Gaussian kernel bandwidth, in the units of the residuals.
    epsilon : "auto" or float, default="auto"
        Quantization threshold; "auto" recomputes (max - min) / 20 from the
        current residuals, which bounds the codebook at 20 elements.
    a_max : float, default=1e6
        Relevance value at which a dimension is pruned.
    max_iter : int, default=300
        Maximum number of outer variational iterations.
    tol : float, default=1e-4
        Relative objective change that stops the outer loop.
    relevance_update : {"fast", "slow"}, default="fast"
        Effective-parameters rule versus posterior-moment rule.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        MAP weights; exactly zero on pruned dimensions.
    active_mask_ : ndarray of bool
        Dimensions that survived pruning.
    relevance_ : ndarray of shape (n_features,)
        Final relevance expectations E[a_d].
    report_ : FitReport
        Objective trace, pruning history, convergence status, wall time.
    """

    _estimator_kind = SBL_MEE


class SBLMEEClassifier(_SparseClassifierBase):
    """Sparse logistic classification with the restricted error-entropy
    likelihood.

    A correntropy fit first provides preliminary prediction errors; their
    counts over the three error modes (correct, false negative, false
    positive) weight the fixed codebook [0, -1, 1] for the whole fit.
    Hyperparameters and fitted attributes match :class:`SBLMEERegressor`,
    plus ``classes_``.
    """

    _estimator_kind = SBL_MEE


class SBCLRegressor(_SparseRegressorBase):
    """Sparse Bayesian regression with the correntropy likelihood (the
    single-element-codebook special case of the entropy engine)."""

    _estimator_kind = SBCL


class SBCLClassifier(_SparseClassifierBase):
    """Sparse logistic classification with the correntropy likelihood."""

    _estimator_kind = SBCL


class SBLGaussianRegressor(_SparseRegressorBase):
    """Conventional sparse Bayesian regression with a Gaussian likelihood.

    The weight step is the exact Gaussian posterior mean; ``noise_variance``
    fixes the observation noise, or ``None`` re-estimates it every iteration
    from the residuals and the effective number of parameters.
    """

    _estimator_kind = SBL_GAUSSIAN


class SBLBinomialClassifier(_SparseClassifierBase):
    """Conventional sparse logistic classification (cross-entropy likelihood,
    Laplace approximation, damped Newton weight step)."""

    _estimator_kind = SBL_BINOMIAL
