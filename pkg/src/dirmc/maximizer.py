"""Simplex-constrained maximization of the document log-likelihood.

``cover_maximize`` runs the multiplicative fixed-point ascent of Cover
(1984) for log-optimal mixtures: b_i <- b_i * a_i(b) with a(b) = grad H(b).
Because theta . grad H(theta) = 1 for mixture likelihoods, the update stays
on the simplex up to rounding and the objective value never decreases.

``kkt_report`` turns a near-stationary point into the certificate every
downstream formula consumes: active set, multipliers lambda_i = 1 - grad_i,
the critical-cone basis, and the reduced Hessian with its
negative-definiteness flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import KktViolationError, NumericalError, ValidationError
from .objectives import LdaInstance, LdaObjective
from .simplex import SimplexPoint, coords_of


@dataclass(frozen=True)
class CoverConfig:
    max_iters: int = 10_000
    value_tol: float = 1e-14      # stop when the per-step value gain drops below
    zero_tol: float = 1e-8        # active-set threshold on theta*_i
    kkt_tol: float = 1e-6         # stationarity tolerance on |grad_i - 1|

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be positive")
        if min(self.value_tol, self.zero_tol, self.kkt_tol) <= 0:
            raise ValidationError("tolerances must be positive")


@dataclass(frozen=True, eq=False)
class CoverResult:
    theta: SimplexPoint
    values: np.ndarray            # objective value at each iterate, b0 first
    iterations: int
    converged: bool


def cover_maximize(inst: LdaInstance, cfg: CoverConfig | None = None,
                   b0: SimplexPoint | None = None) -> CoverResult:
    """Multiplicative ascent to the likelihood maximizer over the simplex."""
    cfg = cfg or CoverConfig()
    obj = LdaObjective(inst)
    K = inst.num_topics
    b = np.full(K, 1.0 / K) if b0 is None else coords_of(b0).copy()
    if b.size != K:
        raise ValidationError("b0 has the wrong dimension")
    if np.any(b <= 0):
        raise ValidationError("b0 must be strictly positive in every coordinate")
    b = b / b.sum()

    values = []
    converged = False
    iterations = 0
    prev = None
    for _ in range(cfg.max_iters):
        ev = obj.evaluate(b, gradient=True)
        if not np.isfinite(ev.value):
            raise NumericalError("objective value is not finite; corrupt instance")
        values.append(ev.value)
        # the value criterion alone can fire while the gradient is still a
        # few ulps-of-value away from stationarity (the objective is
        # quadratically flat near the maximizer), so coordinates that are not
        # vanishing must also satisfy the first-order condition
        surviving = b >= cfg.zero_tol
        residual = float(np.abs(ev.gradient[surviving] - 1.0).max())
        if (prev is not None and ev.value - prev < cfg.value_tol
                and residual <= 0.5 * cfg.kkt_tol):
            converged = True
            break
        prev = ev.value
        b = b * ev.gradient          # a_i(b) averages to 1 under theta . grad H = 1
        b /= b.sum()
        iterations += 1
    else:
        values.append(obj.value(b))
    return CoverResult(theta=SimplexPoint(b), values=np.asarray(values),
                       iterations=iterations, converged=converged)


def critical_cone_basis(dim: int, num_active: int) -> np.ndarray:
    """Basis of the critical cone after relabeling actives first.

    Returns the dim x (dim-1-num_active) matrix with zero rows on the active
    block, an identity on the free block, and a final -1 row; each column
    sums to zero.  num_active = dim-1 (a vertex) yields an empty basis.
    """
    if dim < 1:
        raise ValidationError("dim must be positive")
    if not 0 <= num_active <= dim - 1:
        raise ValidationError("num_active must lie in [0, dim-1]")
    q = dim - 1 - num_active
    basis = np.zeros((dim, q))
    basis[num_active:dim - 1, :] = np.eye(q)
    basis[dim - 1, :] = -1.0
    return basis


def reduced_hessian(hess: np.ndarray, basis: np.ndarray) -> tuple[np.ndarray, bool]:
    """(U^T M U, negative-definite flag); the flag tests Cholesky of -U^T M U."""
    if hess.shape[0] != hess.shape[1] or basis.shape[0] != hess.shape[0]:
        raise ValidationError("dimension mismatch between hessian and basis")
    red = basis.T @ hess @ basis
    red = 0.5 * (red + red.T)
    return red, _is_negative_definite(red)


def _is_negative_definite(mat: np.ndarray) -> bool:
    if mat.shape[0] == 0:
        return True
    try:
        np.linalg.cholesky(-mat)
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass(frozen=True, eq=False)
class MaximizerReport:
    """KKT certificate at the maximizer.

    Coordinates are relabeled internally so the active set comes first;
    ``permutation`` maps relabeled positions to original indices, and the
    report's vectors (theta_star, lam, gradient, hessian) stay in original
    indexing.  ``reduced_hessian`` is U^T hess U in the relabeled basis.
    """

    theta_star: SimplexPoint
    active_set: tuple[int, ...]
    num_active: int
    lam: np.ndarray               # multipliers over active_set, in its order
    mu: float                     # equality multiplier; 1 for mixture likelihoods
    permutation: tuple[int, ...]
    reduced_hessian: np.ndarray
    reduced_hessian_negdef: bool
    hessian: np.ndarray
    gradient: np.ndarray
    strict_complementarity: bool
    min_lambda: float
    kkt_residual: float           # max |grad_i - 1| over inactive coordinates

    @property
    def dim(self) -> int:
        return self.theta_star.dim

    def to_dict(self) -> dict:
        return {
            "theta_star": [float(x) for x in self.theta_star.coords],
            "active_set": list(self.active_set),
            "m": self.num_active,
            "lambda": [float(x) for x in self.lam],
            "mu": self.mu,
            "strict_complementarity": self.strict_complementarity,
            "min_lambda": self.min_lambda,
            "kkt_residual": self.kkt_residual,
            "reduced_hessian_negdef": self.reduced_hessian_negdef,
        }


def snap_to_active_set(theta_star, zero_tol: float) -> SimplexPoint:
    """Zero every coordinate below zero_tol and renormalize the rest."""
    t = coords_of(theta_star).copy()
    t[t < zero_tol] = 0.0
    if t.sum() <= 0:
        raise ValidationError("all coordinates fell below the active-set threshold")
    return SimplexPoint(t / t.sum())


def report_from_gradient_hessian(theta_star: SimplexPoint, grad: np.ndarray,
                                 hess: np.ndarray, cfg: CoverConfig | None = None,
                                 mu: float = 1.0) -> MaximizerReport:
    """Assemble a report at a snapped point (exact zeros mark the active set)."""
    cfg = cfg or CoverConfig()
    t = theta_star.coords
    K = t.size
    active = tuple(int(i) for i in np.flatnonzero(t == 0.0))
    inactive = tuple(int(i) for i in np.flatnonzero(t > 0.0))
    m = len(active)

    resid = float(np.abs(grad[list(inactive)] - mu).max())
    if resid > cfg.kkt_tol:
        raise KktViolationError(
            f"inactive coordinate violates stationarity: max |grad - {mu}| = {resid:.3e}")
    lam = mu - grad[list(active)] if m else np.zeros(0)
    if m and lam.min() < -cfg.kkt_tol:
        raise KktViolationError(
            f"negative multiplier {lam.min():.3e} on the active set; not a maximizer")

    perm = active + inactive
    basis = critical_cone_basis(K, m)
    hess_perm = hess[np.ix_(perm, perm)]
    red, negdef = reduced_hessian(hess_perm, basis)

    return MaximizerReport(
        theta_star=theta_star,
        active_set=active,
        num_active=m,
        lam=lam,
        mu=mu,
        permutation=perm,
        reduced_hessian=red,
        reduced_hessian_negdef=negdef,
        hessian=hess,
        gradient=grad,
        strict_complementarity=bool(m == 0 or lam.min() > cfg.kkt_tol),
        min_lambda=float(lam.min()) if m else float("inf"),
        kkt_residual=resid,
    )


def kkt_report(inst: LdaInstance, theta_star, cfg: CoverConfig | None = None) -> MaximizerReport:
    """Report for a (near-)stationary point of the document log-likelihood.

    Coordinates below zero_tol are snapped to exactly zero and the remainder
    renormalized before evaluating the gradient and Hessian; the Laplace
    constants downstream require an exact support.
    """
    cfg = cfg or CoverConfig()
    snapped = snap_to_active_set(theta_star, cfg.zero_tol)
    ev = LdaObjective(inst).evaluate(snapped, gradient=True, hessian=True)
    return report_from_gradient_hessian(snapped, ev.gradient, ev.hessian, cfg, mu=1.0)


def kl_surrogate_report(theta_star: SimplexPoint, cfg: CoverConfig | None = None) -> MaximizerReport:
    """Report for the KL surrogate objective at its own maximizer.

    The surrogate's gradient at theta* is 1 on the support and 0 on the
    active set (multipliers all equal 1), and its Hessian is -diag(1/theta*).
    """
    ts = theta_star.coords
    grad = np.where(ts > 0, 1.0, 0.0)
    diag = np.where(ts > 0, -1.0 / np.where(ts > 0, ts, 1.0), 0.0)
    return report_from_gradient_hessian(theta_star, grad, np.diag(diag), cfg, mu=1.0)
