"""Generalized-linear-model primitives shared by every estimator.

Two link functions are supported: ``identity`` for linear regression and
``logistic`` for binary classification.  There is no implicit intercept;
append a constant column if one is wanted.
"""

from dataclasses import dataclass

import numpy as np

IDENTITY = "identity"
LOGISTIC = "logistic"
LINKS = (IDENTITY, LOGISTIC)

REGRESSION = "regression"
CLASSIFICATION = "classification"
TASKS = (REGRESSION, CLASSIFICATION)

# Linear predictors are clamped to this range before exponentiation so that
# logistic outputs stay strictly inside (0, 1) and downstream kernel
# evaluations never see non-finite values.
LOGIT_CLAMP = 35.0


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix ``x`` (n_samples x n_features) with target vector ``t``."""

    x: np.ndarray
    t: np.ndarray
    task: str

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        t = np.asarray(self.t, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"x must be 2-dimensional, got shape {x.shape}")
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"x must have at least one row and one column, got {x.shape}")
        if t.ndim != 1 or t.shape[0] != x.shape[0]:
            raise ValueError(f"t must be a length-{x.shape[0]} vector, got shape {t.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("x contains non-finite values")
        if not np.all(np.isfinite(t)):
            raise ValueError("t contains non-finite values")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.task == CLASSIFICATION and not np.all(np.isin(t, (0.0, 1.0))):
            raise ValueError("classification targets must all be 0 or 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)

    @property
    def n_samples(self):
        return self.x.shape[0]

    @property
    def n_features(self):
        return self.x.shape[1]

    @property
    def link(self):
        return LOGISTIC if self.task == CLASSIFICATION else IDENTITY


@dataclass(frozen=True, eq=False)
class GlmModel:
    """A fitted linear predictor: link function plus weight vector."""

    link: str
    w: np.ndarray

    def __post_init__(self):
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}; expected one of {LINKS}")
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1:
            raise ValueError(f"w must be a vector, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("w contains non-finite values")
        object.__setattr__(self, "w", w)


@dataclass(frozen=True, eq=False)
class ActiveSet:
    """Boolean mask over feature dimensions; ``indices`` lists the true positions."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 1:
            raise ValueError(f"mask must be a vector, got shape {mask.shape}")
        object.__setattr__(self, "mask", mask)

    @property
    def indices(self):
        return np.flatnonzero(self.mask)

    @property
    def n_active(self):
        return int(self.mask.sum())


def inverse_link(z, link):
    """Apply the inverse link to a linear predictor (scalar or array)."""
    if link == IDENTITY:
        return z
    if link == LOGISTIC:
        z = np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP)
        return 1.0 / (1.0 + np.exp(-z))
    raise ValueError(f"unknown link {link!r}")


def predict(model, x):
    """Model output for a single feature vector or a stack of rows.

    Returns a float for a 1-d input and an array for a 2-d input.  Logistic
    outputs always lie strictly inside (0, 1).
    """
    x = np.asarray(x, dtype=float)
    d = model.w.shape[0]
    if x.shape[-1] != d:
        raise ValueError(f"feature dimension mismatch: model has {d}, input has {x.shape[-1]}")
    z = x @ model.w
    out = inverse_link(z, model.link)
    return float(out) if x.ndim == 1 else out


def residuals(model, data):
    """Prediction errors e_i = t_i - model(x_i) for every sample in ``data``."""
    if data.n_features != model.w.shape[0]:
        raise ValueError(
            f"feature dimension mismatch: model has {model.w.shape[0]}, "
            f"data has {data.n_features}"
        )
    return data.t - predict(model, data.x)
