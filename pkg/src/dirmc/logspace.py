"""Log-domain reductions shared by the estimators.

Every routine takes exponents (log-scale values) and defers exponentiation
until after a max-shift, so weights like exp(n*H) with n*H ~ -4e4 never
underflow an entire reduction.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalError

NEG_INF = float("-inf")


def log_moments(log_values: np.ndarray, ddof: int = 1) -> tuple[float, float, float]:
    """(log mean, log second moment, log variance) of exp(log_values).

    The variance uses the ``ddof`` denominator (N - ddof).  Degenerate cases
    (all weights zero, or a second moment at the Cauchy-Schwarz floor, e.g. a
    constant integrand) give -inf variance rather than a negative one.
    """
    n = log_values.size
    if n == 0:
        raise NumericalError("no samples")
    log_n = math.log(n)
    lm1 = float(logsumexp(log_values)) - log_n
    lm2 = float(logsumexp(2.0 * log_values)) - log_n
    if lm1 == NEG_INF:
        return NEG_INF, NEG_INF, NEG_INF
    if n - ddof <= 0 or lm2 <= 2.0 * lm1:
        return lm1, lm2, NEG_INF
    lvar = lm2 + math.log1p(-math.exp(2.0 * lm1 - lm2))
    if ddof:
        lvar += math.log(n) - math.log(n - ddof)
    return lm1, lm2, lvar


def log_diff_exp(log_a: float, log_b: float) -> float:
    """log |exp(log_a) - exp(log_b)|; -inf when the two coincide."""
    if log_a == log_b:
        return NEG_INF
    hi, lo = max(log_a, log_b), min(log_a, log_b)
    if hi == NEG_INF:
        return NEG_INF
    if lo == NEG_INF:
        return hi
    return hi + math.log(-math.expm1(lo - hi))


def log_add_exp(log_a: float, log_b: float) -> float:
    return float(np.logaddexp(log_a, log_b))


def shifted_exp(exponents: np.ndarray) -> tuple[np.ndarray, float]:
    """(exp(x - max x), max x); all -inf input maps to zeros with shift -inf."""
    shift = float(np.max(exponents)) if exponents.size else NEG_INF
    if shift == NEG_INF:
        return np.zeros_like(exponents, dtype=float), NEG_INF
    return np.exp(exponents - shift), shift


def effective_sample_size(log_mean: float, log_second_moment: float, n: int) -> float:
    """Kish effective sample size N * M1^2 / M2 of a positive weight sample."""
    if log_mean == NEG_INF or log_second_moment == NEG_INF:
        return 0.0
    return float(n * math.exp(2.0 * log_mean - log_second_moment))


def weighted_correlation(x_exponents: np.ndarray, y_exponents: np.ndarray,
                         log_weights: np.ndarray | None = None) -> float:
    """Squared correlation of exp(x) and exp(y), optionally weighted.

    Each exponent array is max-shifted independently before exponentiation;
    correlation is invariant to those positive rescalings.  Weights (log
    scale) are likewise shifted and self-normalized.
    """
    x, _ = shifted_exp(np.asarray(x_exponents, dtype=float))
    y, _ = shifted_exp(np.asarray(y_exponents, dtype=float))
    if log_weights is None:
        w = np.ones_like(x)
    else:
        w, _ = shifted_exp(np.asarray(log_weights, dtype=float))
    sw = w.sum()
    if sw <= 0:
        raise NumericalError("all correlation weights are zero")
    mx = float(np.dot(w, x)) / sw
    my = float(np.dot(w, y)) / sw
    dx = x - mx
    dy = y - my
    cov = float(np.dot(w, dx * dy)) / sw
    vx = float(np.dot(w, dx * dx)) / sw
    vy = float(np.dot(w, dy * dy)) / sw
    if vx <= 0.0 or vy <= 0.0:
        raise NumericalError("degenerate (zero-variance) input to correlation")
    return min(1.0, cov * cov / (vx * vy))
