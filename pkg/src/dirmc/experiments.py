"""Rate, bias, and correlation experiments over instance collections.

These routines reproduce the desk-scale versions of the diagnostic plots:
MSE-ratio decay against document length (with a log-log slope fitted on the
five largest grid points), the truncation-bias decay with its 1e-300 floor
for runs that truncated nothing, and the convergence of the empirical
control-variate correlation to its limiting value.

Reference values and plain-MC variances at large n come from
importance-weighted moment estimates under Dir(alpha + n^0.9 theta*) with
relative truncation 0.1 ("is_weighted" policy) unless a plain run passes
the effective-sample-size degeneracy check; the policy actually used is
recorded per datapoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .estimators import (
    EstimatorConfig,
    LogEstimate,
    importance_sampling,
    is_weighted_prior_moments,
    plain_mc,
)
from .logspace import NEG_INF, log_add_exp, log_diff_exp
from .simplex import DirichletParams, SimplexPoint, TruncationSpec, derive_seed

LOG_BIAS_FLOOR = math.log(1e-300)
DEGENERACY_ESS_FLOOR = 50.0
REFERENCE_GAMMA = 0.9
REFERENCE_EPSILON = 0.1
SLOPE_FIT_POINTS = 5

_ROLE_MAIN = 0
_ROLE_REFERENCE = 1
_ROLE_PLAIN = 2


@dataclass(frozen=True)
class MsePoint:
    n: float
    log_mse_ratio: float
    log_bias_sq: float
    truncated_fraction: float
    variance_policy: str


@dataclass(frozen=True, eq=False)
class MseExperimentResult:
    n_grid: tuple[float, ...]
    log_mse_ratio: tuple[float, ...]
    fitted_slope: float
    theoretical_slope: float
    intercept_fit_window: int
    points: tuple[MsePoint, ...]
    reference_policy: str


def theoretical_mse_slope(dim: int, active_alpha: np.ndarray, gamma: float) -> float:
    """-gamma ((K-1-m)/2 + sum of active-coordinate Dirichlet parameters)."""
    m = active_alpha.size
    return -gamma * (0.5 * (dim - 1 - m) + float(active_alpha.sum()))


def fit_slope(n_values: np.ndarray, log_values: np.ndarray,
              window: int = SLOPE_FIT_POINTS) -> float:
    """Least-squares slope of log value against log n over the largest n."""
    if n_values.size < window:
        raise ValidationError(f"slope fitting needs at least {window} grid points")
    order = np.argsort(n_values)
    xs = np.log(n_values[order][-window:])
    ys = log_values[order][-window:]
    if not np.all(np.isfinite(ys)):
        raise ValidationError("non-finite values in the slope-fit window")
    return float(np.polyfit(xs, ys, 1)[0])


def _reference_config(cfg: EstimatorConfig, theta_star: SimplexPoint,
                      num_samples: int, seed: int) -> EstimatorConfig:
    return replace(
        cfg,
        num_samples=num_samples,
        seed=seed,
        gamma=REFERENCE_GAMMA,
        truncation=TruncationSpec.for_theta_star(theta_star, REFERENCE_EPSILON, "relative"),
        allow_unstable_gamma=False,
    )


def _mc_variance(objective, alpha, n, theta_star, cfg_mc, reference_moments) -> tuple[float, str]:
    """(log per-sample MC variance, policy).  Plain moments are only trusted
    when the plain run's effective sample size clears the degeneracy floor."""
    if cfg_mc is not None:
        est = plain_mc(objective, alpha, n, cfg_mc)
        if est.effective_sample_size >= DEGENERACY_ESS_FLOOR and est.log_variance != NEG_INF:
            return est.log_variance, "plain_mc"
    return reference_moments.log_variance, "is_weighted"


def mse_ratio_experiment(objective, alpha: DirichletParams, theta_star: SimplexPoint,
                         active_alpha: np.ndarray, n_grid, cfg_is: EstimatorConfig,
                         cfg_mc: EstimatorConfig | None = None, *,
                         reference: str = "high_precision_is",
                         reference_log_means: dict | None = None,
                         reference_num_samples: int | None = None) -> MseExperimentResult:
    """Per-n MSE(IS)/MSE(MC) in log scale plus fitted and theoretical slopes.

    MSE(IS) = Var(IS)/N + Bias^2 with the bias measured against the
    reference; MSE(MC) = Var(MC)/N.  ``reference`` is ``high_precision_is``
    (an independent gamma=0.9 run with ``reference_num_samples`` draws,
    default 5N, whose moments also provide the MC variance) or ``external``
    (caller supplies exact log means per n via ``reference_log_means``; the
    MC variance still comes from the moment pass).
    """
    n_grid = np.asarray(sorted(float(v) for v in n_grid))
    if n_grid.size < SLOPE_FIT_POINTS:
        raise ValidationError(f"need at least {SLOPE_FIT_POINTS} grid points to fit a slope")
    if reference not in ("high_precision_is", "external"):
        raise ValidationError(f"unknown reference policy {reference!r}")
    if reference == "external" and reference_log_means is None:
        raise ValidationError("external reference requires reference_log_means")
    if cfg_is.gamma is None:
        raise ValidationError("cfg_is must set gamma")
    ref_n = reference_num_samples or 5 * cfg_is.num_samples

    points = []
    for idx, n in enumerate(n_grid):
        cfg_point = replace(cfg_is, seed=derive_seed(cfg_is.seed, _ROLE_MAIN, idx))
        est = importance_sampling(objective, alpha, n, theta_star, cfg_point)

        target_shift = float(n) ** cfg_is.gamma if n > 0 else 0.0
        ref_cfg = _reference_config(cfg_is, theta_star, ref_n,
                                    derive_seed(cfg_is.seed, _ROLE_REFERENCE, idx))
        moments = is_weighted_prior_moments(objective, alpha, n, theta_star, ref_cfg,
                                            target_shift=target_shift)
        if reference == "external":
            log_ref = float(reference_log_means[float(n)])
        else:
            log_ref = moments.log_first

        # the estimator's variance comes from the cross-proposal second
        # moment: the weakly shifted estimator's own empirical variance
        # degenerates once its effective sample size collapses at large n
        log_var_term = moments.log_target_variance - math.log(est.num_samples)
        # (ref - mean)^2 measures bias^2 plus the sampling noise of both
        # means; subtracting that noise floor (floored at zero) keeps the
        # term meaningful even where the main-run mean itself is degenerate
        log_bias_raw = 2.0 * log_diff_exp(log_ref, est.log_mean)
        log_noise = log_add_exp(
            log_var_term,
            moments.is_estimate.log_variance - math.log(moments.is_estimate.num_samples))
        log_bias_sq = log_diff_exp(log_bias_raw, log_noise) if log_bias_raw > log_noise else NEG_INF
        log_mse_is = log_add_exp(log_var_term, log_bias_sq)
        cfg_plain = None
        if cfg_mc is not None:
            cfg_plain = replace(cfg_mc, seed=derive_seed(cfg_is.seed, _ROLE_PLAIN, idx))
        log_var_mc, policy = _mc_variance(objective, alpha, n, theta_star, cfg_plain, moments)
        log_mse_mc = log_var_mc - math.log(cfg_mc.num_samples if cfg_mc else est.num_samples)

        points.append(MsePoint(
            n=float(n),
            log_mse_ratio=log_mse_is - log_mse_mc,
            log_bias_sq=log_bias_sq,
            truncated_fraction=est.truncated_fraction,
            variance_policy=policy,
        ))

    ratios = np.asarray([p.log_mse_ratio for p in points])
    slope = fit_slope(n_grid, ratios)
    theo = theoretical_mse_slope(theta_star.dim, np.asarray(active_alpha, dtype=float),
                                 cfg_is.gamma)
    return MseExperimentResult(
        n_grid=tuple(float(v) for v in n_grid),
        log_mse_ratio=tuple(float(v) for v in ratios),
        fitted_slope=slope,
        theoretical_slope=theo,
        intercept_fit_window=SLOPE_FIT_POINTS,
        points=tuple(points),
        reference_policy=reference,
    )


@dataclass(frozen=True)
class BiasPoint:
    n: float
    log_bias_sq_over_mse: float
    truncated_fraction: float
    zero_truncation: bool
    floored: bool


@dataclass(frozen=True, eq=False)
class BiasDiagnostic:
    points: tuple[BiasPoint, ...]

    @property
    def n_grid(self) -> np.ndarray:
        return np.asarray([p.n for p in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.asarray([p.log_bias_sq_over_mse for p in self.points])


def bias_diagnostic(objective, alpha: DirichletParams, theta_star: SimplexPoint,
                    n_grid, cfg_is: EstimatorConfig, *,
                    reference_num_samples: int | None = None) -> BiasDiagnostic:
    """Per-n log(Bias^2 / MSE_MC) of the truncated estimator.

    Runs that truncate no samples are exactly unbiased on the retained
    event and get the recorded floor of 1e-300 instead of a noise reading.
    """
    if cfg_is.gamma is None:
        raise ValidationError("cfg_is must set gamma")
    ref_n = reference_num_samples or 5 * cfg_is.num_samples
    points = []
    for idx, n in enumerate(sorted(float(v) for v in n_grid)):
        cfg_point = replace(cfg_is, seed=derive_seed(cfg_is.seed, _ROLE_MAIN, idx))
        est = importance_sampling(objective, alpha, n, theta_star, cfg_point)
        ref_cfg = _reference_config(cfg_is, theta_star, ref_n,
                                    derive_seed(cfg_is.seed, _ROLE_REFERENCE, idx))
        moments = is_weighted_prior_moments(objective, alpha, n, theta_star, ref_cfg)
        log_mse_mc = moments.log_variance - math.log(est.num_samples)

        zero_truncation = est.truncated_fraction == 0.0
        if zero_truncation:
            value = LOG_BIAS_FLOOR
        else:
            value = 2.0 * log_diff_exp(moments.log_first, est.log_mean) - log_mse_mc
            value = max(value, LOG_BIAS_FLOOR)
        points.append(BiasPoint(
            n=float(n),
            log_bias_sq_over_mse=value,
            truncated_fraction=est.truncated_fraction,
            zero_truncation=zero_truncation,
            floored=value == LOG_BIAS_FLOOR,
        ))
    return BiasDiagnostic(points=tuple(points))


def cv_correlation_gap(objective, kl_obj, alpha: DirichletParams, n: float,
                       cfg: EstimatorConfig, limiting_rho_sq: float) -> tuple[float, float]:
    """(empirical rho_n^2, log(1 - rho_n^2) - log(1 - rho^2))."""
    from .estimators import empirical_rho_squared

    rho_sq = empirical_rho_squared(objective, kl_obj, alpha, n, cfg)
    if rho_sq >= 1.0 or limiting_rho_sq >= 1.0:
        return rho_sq, NEG_INF if rho_sq >= 1.0 else float("inf")
    return rho_sq, math.log1p(-rho_sq) - math.log1p(-limiting_rho_sq)
