"""Variational ARD engine with an error-entropy likelihood.

The estimator alternates two steps: a weight step that maximizes the
penalized kernel-sum objective

    J(w) = sum_i sum_j eta_j k_sigma(e_i - c_j) - 1/2 w^T diag(a) w

via a Laplace approximation around its maximum, and a relevance step that
updates the per-dimension prior precisions a_d from the posterior moments.
Dimensions whose precision reaches ``a_max`` are pruned permanently.  The
same outer loop also drives the comparison estimators in ``baselines``
through pluggable likelihood objects.
"""

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .entropy import (
    Codebook,
    build_codebook,
    gaussian_kernel,
    quantization_threshold,
    restricted_codebook,
)
from .glm import (
    IDENTITY,
    LOGISTIC,
    REGRESSION,
    ActiveSet,
    GlmModel,
    inverse_link,
)

FAST = "fast"
SLOW = "slow"

_MAX_JITTER_DOUBLINGS = 50
_MAX_HALVINGS = 30


class NumericalError(RuntimeError):
    """Raised when an optimization step produces non-finite values or a
    Hessian cannot be made positive definite."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters shared by every estimator in the package.

    ``epsilon="auto"`` selects the range/20 quantization threshold recomputed
    from the current residuals; a float fixes the threshold.  ``sigma`` is the
    Gaussian kernel bandwidth.  ``noise_variance`` only affects the Gaussian
    baseline: ``None`` re-estimates it every outer iteration.
    """

    sigma: float = 1.0
    epsilon: "float | str" = "auto"
    a_max: float = 1e6
    max_outer_iters: int = 300
    outer_tol: float = 1e-4
    w_step_max_iters: int = 100
    w_step_tol: float = 1e-6
    relevance_update: str = FAST
    hessian_jitter: float = 1e-8
    noise_variance: "float | None" = None
    seed: int = 0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.epsilon != "auto" and (not np.isfinite(self.epsilon) or self.epsilon < 0):
            raise ValueError(f"epsilon must be 'auto' or a nonnegative number, got {self.epsilon}")
        if self.a_max <= 0:
            raise ValueError(f"a_max must be positive, got {self.a_max}")
        if self.max_outer_iters < 1 or self.w_step_max_iters < 1:
            raise ValueError("iteration limits must be at least 1")
        if self.outer_tol <= 0 or self.w_step_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.relevance_update not in (FAST, SLOW):
            raise ValueError(f"relevance_update must be 'fast' or 'slow', got {self.relevance_update}")
        if self.hessian_jitter < 0:
            raise ValueError(f"hessian_jitter must be nonnegative, got {self.hessian_jitter}")
        if self.noise_variance is not None and self.noise_variance <= 0:
            raise ValueError(f"noise_variance must be positive when fixed, got {self.noise_variance}")


@dataclass(frozen=True, eq=False)
class PosteriorState:
    """Variational solution: MAP weights, Laplace variances, relevances.

    Pruned dimensions carry ``w_star = 0``, ``h_inv_diag = 0`` and a
    relevance at or above the pruning threshold.
    """

    w_star: np.ndarray
    h_inv_diag: np.ndarray
    a_expect: np.ndarray
    active: ActiveSet
    codebook: "Codebook | None"


@dataclass(frozen=True, eq=False)
class FitReport:
    """Per-fit diagnostics: objective trace, pruning events, convergence."""

    objective_trace: np.ndarray
    pruned_per_iter: tuple
    converged: bool
    iterations_used: int
    all_pruned: bool
    codebook_sizes: tuple
    wall_time_s: float
    config: FitConfig


# ---------------------------------------------------------------------------
# objective, gradient, Hessian


def _model_output(x, w, link):
    return inverse_link(x @ w, link)


def _data_loglik(errors, cb, sigma):
    if errors.shape[0] == 0:
        return 0.0
    k = gaussian_kernel(errors[:, None] - cb.elements[None, :], sigma)
    return float((k * cb.counts).sum())


def penalized_objective(x, t, link, cb, sigma, a_diag, w):
    """J(w): kernel-sum data term minus the quadratic relevance penalty."""
    e = t - _model_output(x, w, link)
    with np.errstate(over="ignore"):  # an overflowing penalty yields -inf,
        penalty = 0.5 * float(a_diag @ (w * w))  # caught by the callers' checks
    return _data_loglik(e, cb, sigma) - penalty


def penalized_gradient(x, t, link, cb, sigma, a_diag, w):
    """Analytic gradient of ``penalized_objective`` with respect to ``w``."""
    n, d = x.shape
    if n == 0:
        return -a_diag * w
    that = _model_output(x, w, link)
    e = t - that
    u = e[:, None] - cb.elements[None, :]
    phi = cb.counts * gaussian_kernel(u, sigma)
    coef = (phi * u).sum(axis=1) / (sigma * sigma)
    if link == LOGISTIC:
        coef = coef * that * (1.0 - that)
    return x.T @ coef - a_diag * w


def negative_hessian(x, t, link, cb, sigma, a_diag, w_star, *, ensure_pd=False, jitter=1e-8):
    """Negative Hessian of the penalized objective at ``w_star``.

    With ``ensure_pd`` the matrix is nudged toward positive definiteness by
    adding a doubling multiple of ``jitter * mean(|diag|)`` to the diagonal
    until a Cholesky factorization succeeds.
    """
    a_diag = np.asarray(a_diag, dtype=float)
    n = x.shape[0]
    if n == 0:
        h = np.diag(a_diag)
    else:
        that = _model_output(x, w_star, link)
        e = t - that
        u = e[:, None] - cb.elements[None, :]
        phi = cb.counts * gaussian_kernel(u, sigma)
        s2 = sigma * sigma
        psi1 = (phi * (1.0 - u * u / s2)).sum(axis=1) / s2
        if link == IDENTITY:
            coef = psi1
        else:
            g1 = that * (1.0 - that)
            psi2 = (phi * u).sum(axis=1) / s2
            coef = psi1 * g1 * g1 - psi2 * g1 * (1.0 - 2.0 * that)
        h = x.T @ (x * coef[:, None])
        h[np.diag_indices_from(h)] += a_diag
    if ensure_pd:
        h, _ = _ensure_positive_definite(h, jitter)
    return h


def _ensure_positive_definite(h, jitter):
    """Return (h + tau*I, cholesky factor), doubling tau until PD."""
    diag_scale = float(np.mean(np.abs(np.diag(h)))) or 1.0
    tau = 0.0
    for _ in range(_MAX_JITTER_DOUBLINGS + 1):
        try:
            hp = h if tau == 0.0 else h + tau * np.eye(h.shape[0])
            low = np.linalg.cholesky(hp)
            return hp, low
        except np.linalg.LinAlgError:
            tau = jitter * diag_scale if tau == 0.0 else 2.0 * tau
            if tau == 0.0:
                tau = np.finfo(float).tiny
    raise NumericalError(
        f"Hessian could not be made positive definite after {_MAX_JITTER_DOUBLINGS} jitter doublings"
    )


def _inverse_diag_from_cholesky(low):
    inv_low = solve_triangular(low, np.eye(low.shape[0]), lower=True)
    return (inv_low * inv_low).sum(axis=0)


# ---------------------------------------------------------------------------
# weight step


def _check_w_step_inputs(x, a_diag, w_init):
    a_diag = np.asarray(a_diag, dtype=float)
    d = x.shape[1]
    if a_diag.shape != (d,):
        raise ValueError(f"a_diag must have length {d}, got shape {a_diag.shape}")
    if not np.all(np.isfinite(a_diag)) or np.any(a_diag <= 0):
        raise ValueError("a_diag must be finite and positive")
    if w_init is None:
        w = np.zeros(d)
    else:
        w = np.array(w_init, dtype=float)
        if w.shape != (d,):
            raise ValueError(f"w_init must have length {d}, got shape {w.shape}")
    return a_diag, w


def optimize_w(x, t, link, cb, sigma, a_diag, w_init=None, *, max_iters=100, tol=1e-6,
               rebuild=None, trace=None):
    """Maximize J(w) for a fixed relevance diagonal.

    Identity link: fixed-point iteration that repeatedly solves the weighted
    ridge system induced by the current kernel weights.  Logistic link:
    half-quadratic reweighting with a damped Gauss-Newton inner step.  Both
    safeguard each step by halving toward the previous iterate until the
    objective does not decrease, so J is non-decreasing across iterations for
    a fixed codebook.

    ``rebuild``, when given, is called with the current residuals after every
    accepted step and must return the codebook to use next (the regression
    estimator re-quantizes whenever the weights move).  ``trace`` collects the
    objective value after each accepted step.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    a_diag, w = _check_w_step_inputs(x, a_diag, w_init)

    j_cur = penalized_objective(x, t, link, cb, sigma, a_diag, w)
    if not np.isfinite(j_cur):
        raise NumericalError("objective is non-finite at the initial point", iteration=0)

    for it in range(1, max_iters + 1):
        if link == IDENTITY:
            w_new = _identity_step(x, t, cb, sigma, a_diag, w)
        else:
            w_new = _logistic_step(x, t, cb, sigma, a_diag, w, j_cur, it)
        if w_new is None:  # no ascent direction left: already stationary
            break

        j_new = penalized_objective(x, t, link, cb, sigma, a_diag, w_new)
        halvings = 0
        while (not np.isfinite(j_new) or j_new < j_cur) and halvings < _MAX_HALVINGS:
            w_new = 0.5 * (w + w_new)
            j_new = penalized_objective(x, t, link, cb, sigma, a_diag, w_new)
            halvings += 1
        if not np.isfinite(j_new):
            raise NumericalError("objective became non-finite during the weight step", iteration=it)
        if j_new < j_cur:
            break

        delta = float(np.max(np.abs(w_new - w))) if w.size else 0.0
        w = w_new
        j_cur = j_new
        if trace is not None:
            trace.append(j_cur)
        if rebuild is not None:
            cb = rebuild(t - _model_output(x, w, link))
            j_cur = penalized_objective(x, t, link, cb, sigma, a_diag, w)
        if delta < tol:
            break
    return w


def _identity_step(x, t, cb, sigma, a_diag, w):
    e = t - x @ w
    u = e[:, None] - cb.elements[None, :]
    phi = cb.counts * gaussian_kernel(u, sigma)
    s = phi.sum(axis=1)
    r = s * t - phi @ cb.elements
    gram = x.T @ (x * s[:, None])
    gram[np.diag_indices_from(gram)] += sigma * sigma * a_diag
    try:
        return np.linalg.solve(gram, x.T @ r)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"weighted ridge system is singular: {exc}") from exc


def _logistic_step(x, t, cb, sigma, a_diag, w, j_cur, iteration):
    that = _model_output(x, w, LOGISTIC)
    e = t - that
    u = e[:, None] - cb.elements[None, :]
    phi = cb.counts * gaussian_kernel(u, sigma)
    s2 = sigma * sigma
    g1 = that * (1.0 - that)
    grad = x.T @ ((phi * u).sum(axis=1) / s2 * g1) - a_diag * w
    q = phi.sum(axis=1) / s2 * g1 * g1
    b = x.T @ (x * q[:, None])
    b[np.diag_indices_from(b)] += a_diag
    try:
        step = np.linalg.solve(b, grad)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Gauss-Newton system is singular: {exc}", iteration=iteration) from exc

    alpha = 1.0
    while alpha >= 2.0 ** -_MAX_HALVINGS:
        w_new = w + alpha * step
        j_new = penalized_objective(x, t, LOGISTIC, cb, sigma, a_diag, w_new)
        if np.isfinite(j_new) and j_new >= j_cur:
            return w_new
        alpha *= 0.5
    return None


# ---------------------------------------------------------------------------
# relevance step


def expected_w_sq(w_star_d, h_inv_dd):
    """Posterior second moment of a weight: w*^2 + [H^-1]_dd."""
    h = np.asarray(h_inv_dd, dtype=float)
    if np.any(h < 0):
        raise ValueError("posterior variances must be nonnegative")
    out = np.asarray(w_star_d, dtype=float) ** 2 + h
    return float(out) if out.ndim == 0 else out


def update_relevance(a_old, w_star, h_inv_diag, mode, a_max=1e6):
    """New relevance E[a_d] from the current posterior.

    ``slow`` inverts the posterior second moment; ``fast`` is the
    effective-number-of-parameters rule (1 - a_old * h_inv) / w*^2.  Degenerate
    inputs (zero weight, nonpositive fast numerator, zero second moment) map
    to ``a_max`` so the dimension is pruned.  Accepts scalars or arrays.
    """
    a_old = np.asarray(a_old, dtype=float)
    w = np.asarray(w_star, dtype=float)
    h = np.asarray(h_inv_diag, dtype=float)
    scalar = a_old.ndim == 0 and w.ndim == 0 and h.ndim == 0
    a_old, w, h = np.atleast_1d(a_old, w, h)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if mode == SLOW:
            m2 = w * w + h
            a_new = np.where(m2 > 0, 1.0 / np.where(m2 > 0, m2, 1.0), a_max)
        elif mode == FAST:
            num = 1.0 - a_old * h
            ok = (num > 0) & (w != 0)
            a_new = np.where(ok, num / np.where(w != 0, w * w, 1.0), a_max)
        else:
            raise ValueError(f"mode must be 'fast' or 'slow', got {mode!r}")
    a_new = np.where(np.isfinite(a_new), a_new, a_max)
    return float(a_new[0]) if scalar else a_new


# ---------------------------------------------------------------------------
# likelihood adapters


class MeeLikelihood:
    """Kernel-sum likelihood with a static or residual-driven codebook.

    ``rebuild=True`` re-quantizes the residuals at the start of every weight
    step and after every accepted inner step (regression).  With
    ``rebuild=False`` the supplied codebook stays frozen for the whole fit
    (restricted classification codebook, correntropy single-element codebook).
    """

    def __init__(self, link, cfg, codebook=None, rebuild=False):
        self.link = link
        self.cfg = cfg
        self.codebook = codebook
        self.rebuild = rebuild
        if not rebuild and codebook is None:
            raise ValueError("a frozen codebook must be supplied when rebuild is off")

    def _requantize(self, errors):
        eps = self.cfg.epsilon
        if eps == "auto":
            eps = quantization_threshold(errors)
        self.codebook = build_codebook(errors, eps)
        return self.codebook

    def prepare(self, x, t, w0):
        if self.rebuild:
            self._requantize(t - _model_output(x, w0, self.link))

    def w_step(self, x, t, w, a_diag):
        if self.rebuild:
            self._requantize(t - _model_output(x, w, self.link))
        return optimize_w(
            x, t, self.link, self.codebook, self.cfg.sigma, a_diag, w,
            max_iters=self.cfg.w_step_max_iters, tol=self.cfg.w_step_tol,
            rebuild=self._requantize if self.rebuild else None,
        )

    def objective(self, x, t, w, a_diag):
        return penalized_objective(x, t, self.link, self.codebook, self.cfg.sigma, a_diag, w)

    def neg_hessian_chol(self, x, t, w, a_diag):
        h = negative_hessian(x, t, self.link, self.codebook, self.cfg.sigma, a_diag, w)
        return _ensure_positive_definite(h, self.cfg.hessian_jitter)

    def after_relevance_update(self, x, t, w, gamma_sum):
        pass


# ---------------------------------------------------------------------------
# outer loop


def _ridge_init(x, t, lam=1.0):
    gram = x.T @ x
    gram[np.diag_indices_from(gram)] += lam
    return np.linalg.solve(gram, x.T @ t)


def _initial_weights(x, t, link):
    if link == IDENTITY:
        return _ridge_init(x, t)
    return np.zeros(x.shape[1])


def run_variational_loop(x, t, likelihood, cfg, w0):
    """Alternate weight and relevance updates with pruning until convergence.

    Shared by the error-entropy estimator and every baseline; the likelihood
    object supplies the w-step, objective, and negative Hessian.
    """
    start = time.perf_counter()
    d = x.shape[1]
    active = np.ones(d, dtype=bool)
    w = np.array(w0, dtype=float)
    a = np.ones(d)
    h_inv = np.zeros(d)

    likelihood.prepare(x, t, w)

    trace = []
    pruned_events = []
    cb_sizes = []
    converged = False
    all_pruned = False
    prev_obj = None
    iterations = 0

    for it in range(1, cfg.max_outer_iters + 1):
        iterations = it
        idx = np.flatnonzero(active)
        xa = x[:, idx]
        try:
            w_a = likelihood.w_step(xa, t, w[idx], a[idx])
        except NumericalError as exc:
            raise NumericalError(f"weight step failed at outer iteration {it}: {exc}") from exc
        w[idx] = w_a

        obj = likelihood.objective(xa, t, w_a, a[idx])
        trace.append(obj)
        cb_sizes.append(likelihood.codebook.size if likelihood.codebook is not None else 0)

        _, low = likelihood.neg_hessian_chol(xa, t, w_a, a[idx])
        h_inv_a = _inverse_diag_from_cholesky(low)
        h_inv[:] = 0.0
        h_inv[idx] = h_inv_a

        gamma = 1.0 - a[idx] * h_inv_a
        a_new = update_relevance(a[idx], w_a, h_inv_a, cfg.relevance_update, cfg.a_max)
        a[idx] = a_new

        to_prune = a_new >= cfg.a_max
        if np.any(to_prune):
            for dd in idx[to_prune]:
                pruned_events.append((it, int(dd)))
            w[idx[to_prune]] = 0.0
            h_inv[idx[to_prune]] = 0.0
            active[idx[to_prune]] = False

        likelihood.after_relevance_update(
            x[:, active], t, w[active], float(np.clip(gamma[~to_prune], 0.0, 1.0).sum())
        )

        if not active.any():
            all_pruned = True
            break
        # a pruning event changes the objective's domain, so the plateau test
        # only applies between structurally identical iterations
        if prev_obj is not None and not np.any(to_prune):
            rel_change = abs(obj - prev_obj) / max(1.0, abs(prev_obj))
            if rel_change < cfg.outer_tol:
                converged = True
                break
        prev_obj = obj

    # one more weight optimization at the fixed relevance expectation (MAP)
    if active.any():
        idx = np.flatnonzero(active)
        w[idx] = likelihood.w_step(x[:, idx], t, w[idx], a[idx])
        _, low = likelihood.neg_hessian_chol(x[:, idx], t, w[idx], a[idx])
        h_inv[:] = 0.0
        h_inv[idx] = _inverse_diag_from_cholesky(low)

    state = PosteriorState(
        w_star=w,
        h_inv_diag=h_inv,
        a_expect=a,
        active=ActiveSet(active),
        codebook=likelihood.codebook,
    )
    report = FitReport(
        objective_trace=np.asarray(trace),
        pruned_per_iter=tuple(pruned_events),
        converged=converged,
        iterations_used=iterations,
        all_pruned=all_pruned,
        codebook_sizes=tuple(cb_sizes),
        wall_time_s=time.perf_counter() - start,
        config=cfg,
    )
    return state, report


def fit_correntropy(data, cfg=None):
    """Fit with the single-element codebook ([0], [N]): the correntropy
    special case of the kernel-sum likelihood, never re-quantized."""
    cfg = cfg if cfg is not None else FitConfig()
    cb = Codebook(np.array([0.0]), np.array([data.n_samples]), restricted=False)
    likelihood = MeeLikelihood(data.link, cfg, codebook=cb, rebuild=False)
    w0 = _initial_weights(data.x, data.t, data.link)
    return run_variational_loop(data.x, data.t, likelihood, cfg, w0)


def fit_sbl_mee(data, cfg=None):
    """Fit the sparse error-entropy estimator on a dataset.

    Regression re-quantizes the residuals whenever the weights change.
    Classification first runs a correntropy fit as the preliminary model,
    counts its errors into the restricted codebook [0, -1, 1], and keeps
    those counts frozen for the whole fit.
    """
    cfg = cfg if cfg is not None else FitConfig()
    if data.task == REGRESSION:
        likelihood = MeeLikelihood(IDENTITY, cfg, rebuild=True)
    else:
        prelim_state, _ = fit_correntropy(data, cfg)
        prelim_errors = data.t - _model_output(data.x, prelim_state.w_star, LOGISTIC)
        cb = restricted_codebook(prelim_errors)
        likelihood = MeeLikelihood(LOGISTIC, cfg, codebook=cb, rebuild=False)
    w0 = _initial_weights(data.x, data.t, data.link)
    return run_variational_loop(data.x, data.t, likelihood, cfg, w0)


def map_predictor(state, link):
    """Wrap the MAP weights of a fitted state as a prediction model."""
    return GlmModel(link=link, w=state.w_star)
