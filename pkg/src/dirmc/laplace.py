"""Closed-form large-n asymptotics and limiting constants.

All approximations share the shape

    log E ~ log C + rate * n + poly_exponent * log(scale * n)

where the polynomial power -(K-1-m)/2 - sum of the active-coordinate
Dirichlet parameters is governed by the number m of zero coordinates of the
maximizer.  Constants are assembled in log space; log-determinants come from
Cholesky factors of the negated reduced Hessian, whose failure doubles as
the curvature (negative-definiteness) check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import NumericalError, ValidationError
from .maximizer import MaximizerReport, critical_cone_basis
from .objectives import LdaInstance
from .simplex import DirichletParams, coords_of, log_multivariate_beta

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LaplaceApprox:
    """log-scale asymptote: evaluate(n) = log_constant + rate*n + poly*log(n_scale*n)."""

    log_constant: float
    exponential_rate: float
    poly_exponent: float
    n_scale: float = 1.0

    def evaluate(self, n: float) -> float:
        if n <= 0:
            raise ValidationError("n must be positive")
        return (self.log_constant + self.exponential_rate * n
                + self.poly_exponent * math.log(self.n_scale * n))


def _neg_logdet(mat: np.ndarray, what: str) -> float:
    """log det(-mat) via Cholesky; raises unless -mat is positive definite."""
    if mat.shape[0] == 0:
        return 0.0
    try:
        chol = np.linalg.cholesky(-mat)
    except np.linalg.LinAlgError:
        raise NumericalError(f"{what} is not negative definite") from None
    return 2.0 * float(np.log(np.diag(chol)).sum())


def _check_multipliers(report: MaximizerReport) -> np.ndarray:
    lam = np.asarray(report.lam, dtype=float)
    if lam.size and lam.min() <= 0:
        raise ValidationError(
            "strict complementarity required: active multipliers must be positive")
    return lam


def _log_partial_dirichlet(alpha: np.ndarray, report: MaximizerReport) -> float:
    """log of the Dirichlet density subproduct over the inactive coordinates."""
    ts = report.theta_star.coords
    sup = ts > 0
    return float(np.dot(alpha[sup] - 1.0, np.log(ts[sup]))) - log_multivariate_beta(alpha)


def laplace_first_moment(report: MaximizerReport, alpha: DirichletParams,
                         h_at_star: float) -> LaplaceApprox:
    """Asymptote of log E[exp(n H)]:

        log C = log Dir_partial(theta*) + sum_active (log G(a_k) - a_k log l_k)
                + (q/2) log 2pi - (1/2) log|det reduced Hessian|,   q = K-1-m,

    with the Gaussian factor absent in the vertex case q = 0.
    """
    a = coords_of(alpha)
    lam = _check_multipliers(report)
    act = list(report.active_set)
    q = report.dim - 1 - report.num_active
    logdet = _neg_logdet(report.reduced_hessian, "reduced Hessian")
    log_c = (_log_partial_dirichlet(a, report)
             + float(np.sum(gammaln(a[act]) - a[act] * np.log(lam)))
             + 0.5 * q * LOG_2PI - 0.5 * logdet)
    poly = -0.5 * q - float(a[act].sum())
    return LaplaceApprox(log_constant=log_c, exponential_rate=h_at_star, poly_exponent=poly)


def laplace_second_moment_plain(report: MaximizerReport, alpha: DirichletParams,
                                h_at_star: float) -> LaplaceApprox:
    """Second moment of exp(n H): the first-moment asymptote evaluated at 2n."""
    first = laplace_first_moment(report, alpha, h_at_star)
    return LaplaceApprox(log_constant=first.log_constant,
                         exponential_rate=2.0 * h_at_star,
                         poly_exponent=first.poly_exponent,
                         n_scale=2.0)


def laplace_second_moment_is(report: MaximizerReport, alpha: DirichletParams,
                             h_at_star: float) -> LaplaceApprox:
    """Asymptote of log E[exp(2n H + n^g KL) 1_trunc], the importance-sampling
    second-moment core.  The constant replaces 2pi by pi and l_k by 2 l_k;
    it coincides with the plain second-moment constant absorbed into n^poly.
    """
    a = coords_of(alpha)
    lam = _check_multipliers(report)
    act = list(report.active_set)
    q = report.dim - 1 - report.num_active
    logdet = _neg_logdet(report.reduced_hessian, "reduced Hessian")
    log_c = (_log_partial_dirichlet(a, report)
             + float(np.sum(gammaln(a[act]) - a[act] * np.log(2.0 * lam)))
             + 0.5 * q * math.log(math.pi) - 0.5 * logdet)
    poly = -0.5 * q - float(a[act].sum())
    return LaplaceApprox(log_constant=log_c, exponential_rate=2.0 * h_at_star,
                         poly_exponent=poly)


def beta_asymptotic(alpha: DirichletParams, theta_star, x: float) -> float:
    """log of the asymptote of B(alpha + x * theta*) for large x:

        log C_B + poly * log x + x * (theta* . log theta*),
        C_B = (2pi)^(q/2) * prod_active G(a_i) * prod_support theta_k^(a_k - 1/2).
    """
    if x <= 0:
        raise ValidationError("x must be positive")
    a = coords_of(alpha)
    ts = coords_of(theta_star)
    sup = ts > 0
    act = ~sup
    q = ts.size - 1 - int(act.sum())
    log_cb = (0.5 * q * LOG_2PI + float(gammaln(a[act]).sum())
              + float(np.dot(a[sup] - 0.5, np.log(ts[sup]))))
    poly = -0.5 * q - float(a[act].sum())
    return log_cb + poly * math.log(x) + x * float(np.dot(ts[sup], np.log(ts[sup])))


def _kl_hessian_full(theta_star: np.ndarray) -> np.ndarray:
    """Hessian of KL(theta*|.) at theta*: diag(1/theta*_i) on the support."""
    diag = np.where(theta_star > 0, 1.0 / np.where(theta_star > 0, theta_star, 1.0), 0.0)
    return np.diag(diag)


def limiting_rho_squared(report: MaximizerReport, alpha: DirichletParams) -> float:
    """Limiting squared correlation of exp(nH) with the KL control variate.

    rho^2 = det-ratio(Q, R) * prod_active (4 l_k / (1 + l_k)^2)^(a_k) with
    Q the reduced Hessian of H and R the negated reduced KL Hessian; the
    determinant ratio compares their geometric and arithmetic means.  For an
    interior maximizer of a mixture likelihood the full Hessians give the
    same value; the vertex case has determinant factor 1.
    """
    a = coords_of(alpha)
    lam = _check_multipliers(report)
    act = list(report.active_set)
    ts = report.theta_star.coords
    K = report.dim
    m = report.num_active

    log_kkt = float(np.dot(a[act], math.log(4.0) + np.log(lam) - 2.0 * np.log1p(lam))) if m else 0.0

    if m == K - 1:
        log_det_ratio = 0.0
    elif m == 0:
        q_mat = report.hessian
        r_mat = -_kl_hessian_full(ts)
        log_det_ratio = (0.5 * (_neg_logdet(q_mat, "Hessian")
                                + _neg_logdet(r_mat, "KL Hessian"))
                         - _neg_logdet(0.5 * (q_mat + r_mat), "averaged Hessian"))
    else:
        basis = critical_cone_basis(K, m)
        perm = list(report.permutation)
        kl_perm = _kl_hessian_full(ts)[np.ix_(perm, perm)]
        q_red = report.reduced_hessian
        r_red = -(basis.T @ kl_perm @ basis)
        log_det_ratio = (0.5 * (_neg_logdet(q_red, "reduced Hessian")
                                + _neg_logdet(r_red, "reduced KL Hessian"))
                         - _neg_logdet(0.5 * (q_red + r_red), "averaged reduced Hessian"))

    return math.exp(min(0.0, log_det_ratio + log_kkt))


@dataclass(frozen=True)
class SparsityReport:
    """Topic-sparsity certificate and the correlation lower bound it implies.

    ``lower_bound`` is the constructive exp(-(1/8) C^2 eps^2) form;
    ``lower_bound_theorem`` the exp(-C^2 eps^2) form with the same constant
    C = sqrt(F(eps0)) / sqrt(1 - eps0 sqrt(F(eps0))).  ``applicable`` is
    False (no bound claimed) unless eps < eps0, the maximizer is interior,
    and there are more than three topics.
    """

    epsilon: float
    c_max1: float
    c_max2: float
    epsilon_zero: float
    lower_bound: float
    lower_bound_theorem: float
    applicable: bool


def measured_sparsity(phi: np.ndarray, tie_tol: float = 1e-12) -> float:
    """max over words of (off-dominant mass) / (dominant mass).

    Requires each word's most likely topic to be unique; a tie within
    ``tie_tol`` is rejected because the dominant-topic partition is then
    undefined.
    """
    top = phi.max(axis=0)
    if np.any(top <= 0):
        raise ValidationError("a word has zero mass under every topic")
    runner_up = np.partition(phi, -2, axis=0)[-2, :] if phi.shape[0] > 1 else np.zeros_like(top)
    if np.any(top - runner_up <= tie_tol):
        raise ValidationError("dominant topic is not unique for some word (tie in argmax)")
    return float(((phi.sum(axis=0) - top) / top).max())


def _sparsity_growth(eps: float, c1: float, c2: float, num_topics: int) -> float:
    f_val = 4.0 * c2 * c2 * num_topics + num_topics * (num_topics - 1) * (2.0 * c1 + c2 * eps) ** 2
    return eps * math.sqrt(f_val)


def sparsity_report(inst: LdaInstance, report: MaximizerReport) -> SparsityReport:
    """Measure eps-sparsity of the topic matrix and bound the limiting rho^2.

    eps0 is the unique root of eps * sqrt(F(eps)) = 1/2, located by bisection
    on a doubled bracket (the map is strictly increasing from 0).
    """
    eps = measured_sparsity(inst.phi)
    ts = report.theta_star.coords
    sup = ts > 0
    t_min = float(ts[sup].min())
    t_max = float(ts.max())
    c1 = math.sqrt(t_max) / t_min ** 1.5
    c2 = t_max / t_min ** 2
    K = inst.num_topics

    hi = 1.0
    while _sparsity_growth(hi, c1, c2, K) <= 0.5:
        hi *= 2.0
        if hi > 1e12:
            raise NumericalError("failed to bracket the sparsity threshold")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _sparsity_growth(mid, c1, c2, K) < 0.5:
            lo = mid
        else:
            hi = mid
    eps0 = 0.5 * (lo + hi)

    root_val = _sparsity_growth(eps0, c1, c2, K)
    f0 = 4.0 * c2 * c2 * K + K * (K - 1) * (2.0 * c1 + c2 * eps0) ** 2
    c_const_sq = f0 / (1.0 - root_val)
    applicable = bool(eps < eps0 and report.num_active == 0 and K > 3)

    return SparsityReport(
        epsilon=eps,
        c_max1=c1,
        c_max2=c2,
        epsilon_zero=eps0,
        lower_bound=math.exp(-0.125 * c_const_sq * eps * eps),
        lower_bound_theorem=math.exp(-c_const_sq * eps * eps),
        applicable=applicable,
    )
