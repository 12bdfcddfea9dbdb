"""Error-entropy machinery: Gaussian kernel, quantization codebooks, and the
kernel-sum objective they induce.

A codebook summarizes an error sample by a few representative values
``elements`` with multiplicities ``counts``.  Regression codebooks come from a
greedy clustering pass over the errors; classification uses the fixed
restricted codebook ``[0, -1, 1]`` whose counts are the numbers of correctly
classified samples, false negatives, and false positives.
"""

from dataclasses import dataclass

import numpy as np

# Threshold used when every error is identical and the range-based rule would
# return 0: keeps the clustering pass well-defined with a single element.
DEGENERATE_EPSILON = 1e-12

RESTRICTED_ELEMENTS = np.array([0.0, -1.0, 1.0])


def gaussian_kernel(x, sigma):
    """exp(-x^2 / (2 sigma^2)), elementwise; sigma must be positive."""
    if sigma <= 0:
        raise ValueError(f"kernel bandwidth must be positive, got {sigma}")
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):  # x*x overflow -> exp(-inf) = 0, correct
        out = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class Codebook:
    """Quantized error summary: distinct ``elements`` with positive ``counts``."""

    elements: np.ndarray
    counts: np.ndarray
    restricted: bool = False

    def __post_init__(self):
        elements = np.asarray(self.elements, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if elements.ndim != 1 or elements.shape[0] < 1:
            raise ValueError("codebook needs at least one element")
        if counts.shape != elements.shape:
            raise ValueError("elements and counts must have the same length")
        if np.any(counts < 1):
            raise ValueError("codebook counts must be positive integers")
        if np.unique(elements).shape[0] != elements.shape[0]:
            raise ValueError("codebook elements must be pairwise distinct")
        if self.restricted and not np.array_equal(elements, RESTRICTED_ELEMENTS):
            raise ValueError("restricted codebooks must have elements [0, -1, 1]")
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "counts", counts)

    @property
    def size(self):
        return self.elements.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())


def quantization_threshold(errors):
    """Range-based clustering threshold (max - min) / 20.

    Falls back to a tiny positive value when all errors coincide, so the
    clustering pass still produces a single-element codebook.
    """
    errors = np.asarray(errors, dtype=float)
    span = float(errors.max() - errors.min())
    return span / 20.0 if span > 0.0 else DEGENERATE_EPSILON


def build_codebook(errors, epsilon):
    """Greedy one-pass clustering of an error sample.

    Starts from the first error; each subsequent error is merged into the
    nearest element when within ``epsilon`` of it (ties to the lowest index),
    otherwise appended as a new element with count 1.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 1 or errors.shape[0] < 1:
        raise ValueError("error set must be a non-empty vector")
    if not np.all(np.isfinite(errors)):
        raise ValueError("error set contains non-finite values")
    if epsilon < 0:
        raise ValueError(f"quantization threshold must be nonnegative, got {epsilon}")

    elements = [errors[0]]
    counts = [1]
    for e in errors[1:]:
        dists = np.abs(e - np.asarray(elements))
        j = int(np.argmin(dists))  # argmin already breaks ties toward low index
        if dists[j] <= epsilon:
            counts[j] += 1
        else:
            elements.append(e)
            counts.append(1)
    return Codebook(np.asarray(elements), np.asarray(counts), restricted=False)


def restricted_codebook(preliminary_errors):
    """Fixed three-element codebook [0, -1, 1] for binary classification.

    Counts come from the preliminary prediction errors: eta_0 counts errors in
    (-0.5, 0.5) (correct), eta_-1 in (-1, -0.5) (false negatives), eta_1 in
    (0.5, 1) (false positives); boundary errors at |e| = 0.5 count as correct.
    A zero count would silently drop one of the three modes, so each zero is
    replaced by 1 while decrementing the largest count, preserving the total.
    """
    errors = np.asarray(preliminary_errors, dtype=float)
    if errors.ndim != 1 or errors.shape[0] < 1:
        raise ValueError("error set must be a non-empty vector")
    if np.any(np.abs(errors) >= 1.0):
        raise ValueError("logistic prediction errors must lie strictly inside (-1, 1)")

    n = errors.shape[0]
    eta0 = int(np.sum(np.abs(errors) <= 0.5))
    eta_neg = int(np.sum(errors < -0.5))
    eta_pos = int(np.sum(errors > 0.5))
    counts = np.array([eta0, eta_neg, eta_pos], dtype=np.int64)

    while np.any(counts == 0):
        zero = int(np.argmin(counts))
        donor = int(np.argmax(counts))
        if counts[donor] <= 1:
            raise ValueError(
                f"cannot assign a positive count to every error mode with only {n} samples"
            )
        counts[zero] += 1
        counts[donor] -= 1

    assert counts.sum() == n
    return Codebook(RESTRICTED_ELEMENTS.copy(), counts, restricted=True)


def _kernel_matrix(errors, cb, sigma):
    errors = np.asarray(errors, dtype=float)
    return gaussian_kernel(errors[:, None] - cb.elements[None, :], sigma)


def qmee_objective(errors, cb, sigma):
    """Quantized error-entropy objective (1/N^2) sum_i sum_j eta_j k(e_i - c_j)."""
    errors = np.asarray(errors, dtype=float)
    n = errors.shape[0]
    if n < 1:
        raise ValueError("error set must be non-empty")
    k = _kernel_matrix(errors, cb, sigma)
    return float((k @ cb.counts).sum()) / (n * n)


def mee_log_likelihood(errors, cb, sigma):
    """Kernel-sum log-likelihood sum_i sum_j eta_j k(e_i - c_j).

    Identical to ``qmee_objective`` without the 1/N^2 normalization.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.shape[0] < 1:
        raise ValueError("error set must be non-empty")
    k = _kernel_matrix(errors, cb, sigma)
    return float((k @ cb.counts).sum())
