"""Comparison estimators driven by the same variational loop.

``sbl-gaussian`` is classic ARD regression: the weight step is the exact
Gaussian posterior mean given the relevances and noise variance.
``sbl-binomial`` is Laplace-approximated logistic regression with the
cross-entropy likelihood.  ``sbcl`` is the correntropy special case of the
kernel-sum engine (single-element codebook, never re-quantized).
"""

import numpy as np

from .engine import (
    FitConfig,
    NumericalError,
    _ensure_positive_definite,
    _initial_weights,
    fit_correntropy,
    run_variational_loop,
)
from .glm import CLASSIFICATION, IDENTITY, LOGISTIC, inverse_link

SBL_MEE = "sbl-mee"
SBL_GAUSSIAN = "sbl-gaussian"
SBL_BINOMIAL = "sbl-binomial"
SBCL = "sbcl"
BASELINE_KINDS = (SBL_GAUSSIAN, SBL_BINOMIAL, SBCL)

# Noise variances are floored here so a perfect (noiseless) fit cannot drive
# the Gaussian likelihood into a division by zero.
_NOISE_FLOOR = 1e-12


def estimate_noise_variance(residuals, dof):
    """Unbiased-style residual variance sum(e^2) / (N - dof).

    ``dof`` is the number of effective parameters (active dimensions not fully
    determined by the prior) and must be smaller than the sample count.
    """
    residuals = np.asarray(residuals, dtype=float)
    n = residuals.shape[0]
    if dof < 0:
        raise ValueError(f"dof must be nonnegative, got {dof}")
    if n <= dof:
        raise ValueError(f"need more samples than degrees of freedom, got N={n}, dof={dof}")
    return float(residuals @ residuals) / (n - dof)


class GaussianLikelihood:
    """Gaussian noise model: exact posterior mean and covariance given A.

    With ``noise_variance=None`` the variance is re-estimated every outer
    iteration from the residuals and the effective number of parameters;
    re-estimation is skipped in the degenerate case dof >= N.
    """

    codebook = None

    def __init__(self, cfg):
        self.cfg = cfg
        self.noise_variance = cfg.noise_variance

    def prepare(self, x, t, w0):
        if self.cfg.noise_variance is None:
            e = t - x @ w0
            self.noise_variance = max(float(np.mean(e * e)), _NOISE_FLOOR)

    def w_step(self, x, t, w, a_diag):
        if x.shape[0] == 0:
            return np.zeros(x.shape[1])
        gram = x.T @ x / self.noise_variance
        gram[np.diag_indices_from(gram)] += a_diag
        try:
            return np.linalg.solve(gram, x.T @ t / self.noise_variance)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"posterior-mean system is singular: {exc}") from exc

    def objective(self, x, t, w, a_diag):
        e = t - x @ w
        n = x.shape[0]
        loglik = -0.5 * n * np.log(2.0 * np.pi * self.noise_variance)
        loglik -= 0.5 * float(e @ e) / self.noise_variance
        return loglik - 0.5 * float(a_diag @ (w * w))

    def neg_hessian_chol(self, x, t, w, a_diag):
        h = x.T @ x / self.noise_variance
        h[np.diag_indices_from(h)] += a_diag
        return _ensure_positive_definite(h, self.cfg.hessian_jitter)

    def after_relevance_update(self, x, t, w, gamma_sum):
        if self.cfg.noise_variance is not None:
            return
        n = t.shape[0]
        if n > gamma_sum:
            e = t - x @ w
            self.noise_variance = max(estimate_noise_variance(e, gamma_sum), _NOISE_FLOOR)


class BinomialLikelihood:
    """Cross-entropy likelihood for binary targets, damped Newton weight step."""

    codebook = None

    def __init__(self, cfg):
        self.cfg = cfg

    def prepare(self, x, t, w0):
        pass

    def _proba(self, x, w):
        return inverse_link(x @ w, LOGISTIC)

    def w_step(self, x, t, w, a_diag):
        w = np.array(w, dtype=float)
        if x.shape[0] == 0:
            return np.zeros(x.shape[1])
        j_cur = self.objective(x, t, w, a_diag)
        for it in range(1, self.cfg.w_step_max_iters + 1):
            p = self._proba(x, w)
            grad = x.T @ (t - p) - a_diag * w
            q = p * (1.0 - p)
            h = x.T @ (x * q[:, None])
            h[np.diag_indices_from(h)] += a_diag
            try:
                step = np.linalg.solve(h, grad)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"Newton system is singular: {exc}", iteration=it) from exc

            alpha, accepted = 1.0, None
            while alpha >= 2.0 ** -30:
                cand = w + alpha * step
                j_new = self.objective(x, t, cand, a_diag)
                if np.isfinite(j_new) and j_new >= j_cur:
                    accepted = (cand, j_new)
                    break
                alpha *= 0.5
            if accepted is None:
                break
            w_new, j_cur = accepted
            delta = float(np.max(np.abs(w_new - w)))
            w = w_new
            if delta < self.cfg.w_step_tol:
                break
        return w

    def objective(self, x, t, w, a_diag):
        p = self._proba(x, w)
        loglik = float(t @ np.log(p) + (1.0 - t) @ np.log1p(-p))
        return loglik - 0.5 * float(a_diag @ (w * w))

    def neg_hessian_chol(self, x, t, w, a_diag):
        p = self._proba(x, w)
        q = p * (1.0 - p)
        h = x.T @ (x * q[:, None])
        h[np.diag_indices_from(h)] += a_diag
        return _ensure_positive_definite(h, self.cfg.hessian_jitter)

    def after_relevance_update(self, x, t, w, gamma_sum):
        pass


def fit_baseline(data, kind, cfg=None):
    """Fit one of the comparison estimators; same state/report schema as the
    error-entropy fit."""
    cfg = cfg if cfg is not None else FitConfig()
    if kind == SBCL:
        return fit_correntropy(data, cfg)
    if kind == SBL_GAUSSIAN:
        likelihood = GaussianLikelihood(cfg)
        w0 = _initial_weights(data.x, data.t, IDENTITY)
        return run_variational_loop(data.x, data.t, likelihood, cfg, w0)
    if kind == SBL_BINOMIAL:
        if data.task != CLASSIFICATION:
            raise ValueError("the binomial baseline requires binary-classification data")
        likelihood = BinomialLikelihood(cfg)
        w0 = _initial_weights(data.x, data.t, LOGISTIC)
        return run_variational_loop(data.x, data.t, likelihood, cfg, w0)
    raise ValueError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")


def fit_estimator(data, kind, cfg=None):
    """Dispatch on an estimator name, covering the error-entropy fit and all
    baselines behind one interface."""
    if kind == SBL_MEE:
        from .engine import fit_sbl_mee

        return fit_sbl_mee(data, cfg)
    return fit_baseline(data, kind, cfg)
