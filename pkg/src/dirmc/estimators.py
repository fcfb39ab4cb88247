"""The three estimators of I(n) = E_Dir(alpha)[exp(n H(theta))].

* ``plain_mc`` averages exp(n H) over prior draws.
* ``importance_sampling`` draws from the shifted proposal
  Dir(alpha + n^gamma theta*), weights by the exact likelihood ratio, and
  zeroes samples outside the truncated simplex (they stay in the
  denominator N, exactly as the estimator is defined).
* ``control_variate`` augments plain MC with the KL surrogate
  exp(n Hhat), whose mean is known in closed form; the variance-minimizing
  coefficient is estimated on the same samples (pooled) or on an
  independent 10% pilot.

Everything is computed in log space.  Sampling is chunked; chunk i draws
from the sub-stream (seed, 0, i) and chunks are reduced in index order, so
results are bitwise deterministic for fixed (seed, N, chunk_size) no matter
how many worker threads run.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .logspace import (
    NEG_INF,
    effective_sample_size,
    log_diff_exp,
    log_moments,
)
from .objectives import KlObjective
from .simplex import (
    DirichletParams,
    RandomStream,
    SimplexPoint,
    TruncationSpec,
    coords_of,
    log_multivariate_beta,
    sample_dirichlet,
    truncation_mask,
)

_MAIN_STREAM = 0
_PILOT_STREAM = 1


@dataclass(frozen=True)
class EstimatorConfig:
    """Shared estimator settings.

    ``gamma`` in (0, 1) scales the importance-sampling proposal shift
    n^gamma; gamma >= 1 makes the untruncated weight non-integrable for
    large n and is refused unless ``allow_unstable_gamma`` is set.
    """

    num_samples: int
    seed: int = 0
    gamma: float | None = None
    truncation: TruncationSpec | None = None
    cv_coefficient_mode: str = "pooled"
    chunk_size: int = 16384
    threads: int = 1
    allow_unstable_gamma: bool = False

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValidationError("num_samples must be positive")
        if self.chunk_size < 1:
            raise ValidationError("chunk_size must be positive")
        if self.threads < 1:
            raise ValidationError("threads must be positive")
        if self.cv_coefficient_mode not in ("pooled", "pilot"):
            raise ValidationError("cv_coefficient_mode must be 'pooled' or 'pilot'")
        if self.gamma is not None:
            if self.gamma <= 0:
                raise ValidationError("gamma must be positive")
            if self.gamma >= 1 and not self.allow_unstable_gamma:
                raise ValidationError(
                    "gamma >= 1 diverges for large n; pass allow_unstable_gamma to override")


@dataclass(frozen=True)
class LogEstimate:
    """Log-scale summary of one estimator run.

    ``log_variance`` is the per-sample variance (N-1 denominator); the
    standard error of the mean is exp(log_standard_error).
    """

    log_mean: float
    log_second_moment: float
    log_variance: float
    n: float
    num_samples: int
    truncated_fraction: float
    seed: int

    @property
    def log_standard_error(self) -> float:
        if self.log_variance == NEG_INF:
            return NEG_INF
        return 0.5 * self.log_variance - 0.5 * math.log(self.num_samples)

    @property
    def effective_sample_size(self) -> float:
        return effective_sample_size(self.log_mean, self.log_second_moment, self.num_samples)

    def to_dict(self) -> dict:
        return {
            "log_mean": self.log_mean,
            "log_second_moment": self.log_second_moment,
            "log_variance": self.log_variance,
            "n": self.n,
            "num_samples": self.num_samples,
            "truncated_fraction": self.truncated_fraction,
            "seed": self.seed,
        }


def _chunks(cfg: EstimatorConfig, stream_base: int = _MAIN_STREAM,
            num_samples: int | None = None):
    total = cfg.num_samples if num_samples is None else num_samples
    base = RandomStream(cfg.seed, (stream_base,))
    start = 0
    index = 0
    while start < total:
        size = min(cfg.chunk_size, total - start)
        yield index, size, base.child(index)
        start += size
        index += 1


def _map_chunks(cfg: EstimatorConfig, worker, stream_base: int = _MAIN_STREAM,
                num_samples: int | None = None) -> list:
    """Evaluate worker(size, stream) per chunk; results ordered by chunk index."""
    jobs = list(_chunks(cfg, stream_base, num_samples))
    if cfg.threads == 1 or len(jobs) == 1:
        return [worker(size, stream) for _, size, stream in jobs]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = [pool.submit(worker, size, stream) for _, size, stream in jobs]
        return [f.result() for f in futures]


def _estimate_from_log_weights(log_weights: np.ndarray, n: float,
                               cfg: EstimatorConfig, truncated: int) -> LogEstimate:
    lm1, lm2, lvar = log_moments(log_weights)
    return LogEstimate(
        log_mean=lm1,
        log_second_moment=lm2,
        log_variance=lvar,
        n=float(n),
        num_samples=log_weights.size,
        truncated_fraction=truncated / log_weights.size,
        seed=cfg.seed,
    )


def plain_mc(objective, alpha: DirichletParams, n: float,
             cfg: EstimatorConfig) -> LogEstimate:
    """(1/N) sum_i exp(n H(theta_i)) with theta_i ~ Dir(alpha), in log scale."""
    if n < 0:
        raise ValidationError("n must be non-negative")

    def worker(size: int, stream: RandomStream) -> np.ndarray:
        thetas = sample_dirichlet(alpha, stream, size)
        return n * objective.value_batch(thetas)

    log_w = np.concatenate(_map_chunks(cfg, worker))
    return _estimate_from_log_weights(log_w, n, cfg, truncated=0)


def _proposal(alpha: DirichletParams, theta_star: np.ndarray, shift: float) -> DirichletParams:
    return DirichletParams(alpha.alpha + shift * theta_star)


def _resolve_truncation(cfg: EstimatorConfig, theta_star: SimplexPoint) -> TruncationSpec:
    ts = coords_of(theta_star)
    expected = tuple(int(i) for i in np.flatnonzero(ts > 0))
    if not expected:
        raise ValidationError("theta_star has empty support")
    spec = cfg.truncation
    if spec is None:
        return TruncationSpec.for_theta_star(theta_star, 0.1, "relative")
    if spec.support != expected:
        raise ValidationError("truncation support does not match the support of theta_star")
    if spec.mode == "absolute" and spec.epsilon >= ts[list(expected)].min():
        raise ValidationError("absolute truncation excludes theta_star itself")
    return spec


def importance_sampling(objective, alpha: DirichletParams, n: float,
                        theta_star: SimplexPoint, cfg: EstimatorConfig, *,
                        proposal_shift: float | None = None) -> LogEstimate:
    """Shifted-proposal estimator with boundary truncation.

    Samples theta ~ Dir(alpha + n^gamma theta*); the per-sample log weight is
    n H(theta) - n^gamma sum_support theta*_k log theta_k + log B(eta) - log B(alpha),
    and samples outside the truncated simplex contribute exactly zero while
    remaining in the denominator.  ``proposal_shift`` overrides n^gamma (its
    zero limit reproduces prior sampling up to truncation).
    """
    if n < 0:
        raise ValidationError("n must be non-negative")
    if proposal_shift is None:
        if cfg.gamma is None:
            raise ValidationError("importance sampling requires gamma (or an explicit shift)")
        proposal_shift = float(n) ** cfg.gamma if n > 0 else 0.0
    spec = _resolve_truncation(cfg, theta_star)
    ts = coords_of(theta_star)
    sup = ts > 0
    eta = _proposal(alpha, ts, proposal_shift)
    log_prefactor = log_multivariate_beta(eta) - log_multivariate_beta(alpha)

    def worker(size: int, stream: RandomStream) -> tuple[np.ndarray, int]:
        thetas = sample_dirichlet(eta, stream, size)
        keep = truncation_mask(thetas, ts, spec)
        log_w = np.full(size, NEG_INF)
        if np.any(keep):
            kept = thetas[keep]
            with np.errstate(divide="ignore"):
                log_kept = np.log(kept[:, sup])
            log_w[keep] = (n * objective.value_batch(kept)
                           - proposal_shift * (log_kept @ ts[sup])
                           + log_prefactor)
        return log_w, int(size - keep.sum())

    parts = _map_chunks(cfg, worker)
    log_w = np.concatenate([p[0] for p in parts])
    truncated = sum(p[1] for p in parts)
    return _estimate_from_log_weights(log_w, n, cfg, truncated=truncated)


@dataclass(frozen=True)
class CvReport:
    """Coefficient diagnostics of one control-variate run."""

    c_star: float
    rho_sq: float                  # empirical squared correlation at this n
    variance_ratio: float          # 1 - rho_sq
    log_known_mean: float          # closed-form log E[exp(n Hhat)]
    coefficient_mode: str

    def to_dict(self) -> dict:
        return {
            "c_star": self.c_star,
            "rho_sq": self.rho_sq,
            "variance_ratio": self.variance_ratio,
            "log_known_mean": self.log_known_mean,
            "coefficient_mode": self.coefficient_mode,
        }


def _cv_pair_worker(objective, kl_obj, alpha, n):
    def worker(size: int, stream: RandomStream) -> tuple[np.ndarray, np.ndarray]:
        thetas = sample_dirichlet(alpha, stream, size)
        return n * objective.value_batch(thetas), n * kl_obj.value_batch(thetas)
    return worker


def _coefficient(x_exp: np.ndarray, y_exp: np.ndarray, shift: float) -> tuple[float, float]:
    """(c*, rho^2) from exponent arrays under a common overflow-safe shift."""
    x = np.exp(x_exp - shift)
    y = np.exp(y_exp - shift)
    dx = x - x.mean()
    dy = y - y.mean()
    cov = float(np.dot(dx, dy)) / x.size
    var_y = float(np.dot(dy, dy)) / x.size
    var_x = float(np.dot(dx, dx)) / x.size
    if var_y <= 0.0:
        raise NumericalError("control variate has zero empirical variance")
    rho_sq = 0.0 if var_x <= 0.0 else min(1.0, cov * cov / (var_x * var_y))
    return -cov / var_y, rho_sq


def control_variate(objective, kl_obj: KlObjective, alpha: DirichletParams, n: float,
                    cfg: EstimatorConfig, *,
                    coefficient: float | None = None) -> tuple[LogEstimate, CvReport]:
    """Plain MC corrected by the KL surrogate: p_cv = p_mc + c (p_hat - E[exp(n Hhat)]).

    Unbiased for every c; the pooled mode estimates the variance-minimizing
    c on the same samples, pilot mode on an independent 10% pre-run.  With
    ``coefficient=0`` the estimate coincides bitwise with ``plain_mc`` on
    the same stream.
    """
    if n < 0:
        raise ValidationError("n must be non-negative")
    worker = _cv_pair_worker(objective, kl_obj, alpha, n)
    parts = _map_chunks(cfg, worker)
    x_exp = np.concatenate([p[0] for p in parts])
    y_exp = np.concatenate([p[1] for p in parts])
    log_known = kl_obj.log_expected_exponential(alpha, n)

    shift = max(float(np.max(x_exp)), float(np.max(y_exp)), log_known)
    if shift == NEG_INF:
        raise NumericalError("all sampled weights are zero")

    mode = cfg.cv_coefficient_mode
    if coefficient is not None:
        c_star = float(coefficient)
        _, rho_sq = _coefficient(x_exp, y_exp, shift)
        mode = "fixed"
    elif mode == "pilot":
        pilot_n = max(2, cfg.num_samples // 10)
        pilot = _map_chunks(cfg, worker, stream_base=_PILOT_STREAM, num_samples=pilot_n)
        px = np.concatenate([p[0] for p in pilot])
        py = np.concatenate([p[1] for p in pilot])
        pilot_shift = max(float(np.max(px)), float(np.max(py)))
        c_star, _ = _coefficient(px, py, pilot_shift)
        _, rho_sq = _coefficient(x_exp, y_exp, shift)
    else:
        c_star, rho_sq = _coefficient(x_exp, y_exp, shift)

    lm_x, lm2_x, lvar_x = log_moments(x_exp)
    if c_star == 0.0:
        estimate = LogEstimate(
            log_mean=lm_x, log_second_moment=lm2_x, log_variance=lvar_x,
            n=float(n), num_samples=x_exp.size, truncated_fraction=0.0, seed=cfg.seed)
        report = CvReport(c_star=0.0, rho_sq=rho_sq, variance_ratio=1.0 - rho_sq,
                          log_known_mean=log_known, coefficient_mode=mode)
        return estimate, report

    x = np.exp(x_exp - shift)
    y = np.exp(y_exp - shift)
    known = math.exp(log_known - shift)
    z = x + c_star * (y - known)               # per-sample CV variable, shifted scale
    mean_z = float(z.mean())
    if mean_z <= 0.0:
        raise NumericalError("control-variate estimate is non-positive")
    m2_z = float(np.dot(z, z)) / z.size
    var_z = m2_z - mean_z * mean_z
    var_z *= z.size / (z.size - 1) if z.size > 1 else 1.0

    estimate = LogEstimate(
        log_mean=math.log(mean_z) + shift,
        log_second_moment=(math.log(m2_z) + 2.0 * shift) if m2_z > 0 else NEG_INF,
        log_variance=(math.log(var_z) + 2.0 * shift) if var_z > 0 else NEG_INF,
        n=float(n),
        num_samples=z.size,
        truncated_fraction=0.0,
        seed=cfg.seed,
    )
    report = CvReport(c_star=c_star, rho_sq=rho_sq, variance_ratio=1.0 - rho_sq,
                      log_known_mean=log_known, coefficient_mode=mode)
    return estimate, report


@dataclass(frozen=True)
class PriorMoments:
    """Importance-weighted estimates of prior moments E[exp(k n H)], k = 1, 2.

    When a target proposal shift is supplied, ``log_target_second`` holds the
    second moment of the target estimator's weight, obtained by re-weighting
    the same samples across proposals; its variance follows from the shared
    first moment.
    """

    log_first: float
    log_second: float
    log_variance: float            # log(E[e^{2nH}] - E[e^{nH}]^2), population form
    truncated_fraction: float
    is_estimate: LogEstimate       # the gamma-IS estimator itself, same samples
    log_target_second: float = NEG_INF
    log_target_variance: float = NEG_INF


def is_weighted_prior_moments(objective, alpha: DirichletParams, n: float,
                              theta_star: SimplexPoint, cfg: EstimatorConfig, *,
                              target_shift: float | None = None) -> PriorMoments:
    """One shifted-proposal pass yielding E[e^{nH}], E[e^{2nH}] and the IS run.

    The same samples produce the IS estimator (weights e^{nH} ratio) and the
    importance-weighted prior moments (weights e^{knH} ratio); this is the
    variance-estimation policy for regimes where plain sampling degenerates.

    With ``target_shift`` set, the pass additionally estimates the second
    moment of the estimator that samples from Dir(alpha + target_shift
    theta*): E[e^{2nH} Dir_a / Dir_target 1].  A weakly shifted estimator's
    own sample variance collapses at large n (its effective sample size can
    drop below one), while this cross-proposal estimate keeps bounded
    relative error under the concentrated reference proposal.
    """
    if cfg.gamma is None:
        raise ValidationError("moment estimation requires gamma")
    shift = float(n) ** cfg.gamma if n > 0 else 0.0
    spec = _resolve_truncation(cfg, theta_star)
    ts = coords_of(theta_star)
    sup = ts > 0
    eta = _proposal(alpha, ts, shift)
    log_prefactor = log_multivariate_beta(eta) - log_multivariate_beta(alpha)
    if target_shift is not None:
        target_eta = _proposal(alpha, ts, target_shift)
        log_target_prefactor = (log_multivariate_beta(target_eta)
                                - log_multivariate_beta(alpha))

    def worker(size: int, stream: RandomStream):
        thetas = sample_dirichlet(eta, stream, size)
        keep = truncation_mask(thetas, ts, spec)
        w1 = np.full(size, NEG_INF)
        w2 = np.full(size, NEG_INF)
        wt = np.full(size, NEG_INF)
        if np.any(keep):
            kept = thetas[keep]
            with np.errstate(divide="ignore"):
                log_kept = np.log(kept[:, sup])
            cross = log_kept @ ts[sup]               # sum_support theta*_k log theta_k
            log_ratio = -shift * cross + log_prefactor
            h = objective.value_batch(kept)
            w1[keep] = n * h + log_ratio
            w2[keep] = 2.0 * n * h + log_ratio
            if target_shift is not None:
                # e^{2nH} Dir_a^2 / (Dir_target Dir_ref), in ratio form
                wt[keep] = (2.0 * n * h - target_shift * cross + log_target_prefactor
                            + log_ratio)
        return w1, w2, wt, int(size - keep.sum())

    parts = _map_chunks(cfg, worker)
    w1 = np.concatenate([p[0] for p in parts])
    w2 = np.concatenate([p[1] for p in parts])
    truncated = sum(p[3] for p in parts)

    estimate = _estimate_from_log_weights(w1, n, cfg, truncated=truncated)
    lm1 = estimate.log_mean
    lm2 = log_moments(w2, ddof=0)[0]
    log_var = log_diff_exp(lm2, 2.0 * lm1)
    log_target_second = NEG_INF
    log_target_variance = NEG_INF
    if target_shift is not None:
        wt = np.concatenate([p[2] for p in parts])
        log_target_second = log_moments(wt, ddof=0)[0]
        log_target_variance = log_diff_exp(log_target_second, 2.0 * lm1)
    return PriorMoments(
        log_first=lm1,
        log_second=lm2,
        log_variance=log_var,
        truncated_fraction=truncated / w1.size,
        is_estimate=estimate,
        log_target_second=log_target_second,
        log_target_variance=log_target_variance,
    )


def empirical_rho_squared(objective, kl_obj: KlObjective, alpha: DirichletParams,
                          n: float, cfg: EstimatorConfig) -> float:
    """Sample squared correlation of exp(nH) and exp(n Hhat) under Dir(alpha).

    With ``cfg.gamma`` unset the pair is sampled from the prior; otherwise
    samples come from the shifted proposal and the correlation is computed
    with likelihood-ratio weights (truncated samples dropped), which is the
    workable route once prior sampling degenerates at large n.  Exponent
    arrays are max-shifted before exponentiation, so the result is invariant
    to constant offsets of either objective up to rounding.
    """
    from .logspace import weighted_correlation

    if cfg.gamma is None:
        worker = _cv_pair_worker(objective, kl_obj, alpha, n)
        parts = _map_chunks(cfg, worker)
        x_exp = np.concatenate([p[0] for p in parts])
        y_exp = np.concatenate([p[1] for p in parts])
        return weighted_correlation(x_exp, y_exp)

    theta_star = kl_obj.theta_star
    shift = float(n) ** cfg.gamma if n > 0 else 0.0
    spec = _resolve_truncation(cfg, theta_star)
    ts = coords_of(theta_star)
    sup = ts > 0
    eta = _proposal(alpha, ts, shift)

    def worker(size: int, stream: RandomStream):
        thetas = sample_dirichlet(eta, stream, size)
        keep = truncation_mask(thetas, ts, spec)
        kept = thetas[keep]
        with np.errstate(divide="ignore"):
            log_kept = np.log(kept[:, sup])
        log_ratio = -shift * (log_kept @ ts[sup])       # constant prefactor cancels
        return (n * objective.value_batch(kept),
                n * kl_obj.value_batch(kept),
                log_ratio)

    parts = _map_chunks(cfg, worker)
    x_exp = np.concatenate([p[0] for p in parts])
    y_exp = np.concatenate([p[1] for p in parts])
    log_w = np.concatenate([p[2] for p in parts])
    if x_exp.size == 0:
        raise NumericalError("every sample was truncated")
    return weighted_correlation(x_exp, y_exp, log_w)
