"""Objective functions whose exponentiated Dirichlet expectations are estimated.

Two objectives ship:

* ``LdaObjective`` — the mixture log-likelihood of a held-out document,
  H(theta) = sum_v p_v log(theta . phi(v)), with analytic gradient and
  Hessian.  Words with p_v = 0 are skipped; they contribute nothing.
* ``KlObjective`` — the surrogate Hhat(theta) = H(theta*) - KL(theta*|theta)
  built around a maximizer, whose exponential moment has a closed form via
  the multivariate Beta function.  It serves as the control variate.

Both expose ``value`` / ``value_batch``; batch evaluation computes the
mixture values theta.phi(v) once and is the hot path of every estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .simplex import (
    RENORM_TOL,
    SUM_ABS_TOL,
    SimplexPoint,
    coords_of,
    kl_divergence,
    log_multivariate_beta,
)


def _normalize_rows(mat: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(mat)):
        raise ValidationError(f"{what} has non-finite entries")
    if np.any(mat < -1e-12):
        raise ValidationError(f"{what} has negative entries")
    mat = np.where(mat < 0, 0.0, mat)
    sums = mat.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > RENORM_TOL):
        raise ValidationError(f"{what} rows must sum to 1 within {RENORM_TOL}")
    # rows already inside the invariant tolerance pass through bit-identical
    off = np.abs(sums - 1.0) > SUM_ABS_TOL
    if np.any(off):
        mat = mat.copy()
        mat[off] /= sums[off, None]
    return mat


@dataclass(frozen=True, eq=False)
class LdaInstance:
    """Topic matrix, empirical word frequencies, and optional document length.

    ``phi`` holds K topic rows of length V, each a distribution over the
    vocabulary; ``p`` is the word-frequency vector of the document being
    scored.  Every word with p_v > 0 must have positive mass under some
    topic, otherwise the likelihood is identically -inf.
    """

    phi: np.ndarray
    p: np.ndarray
    n: int | None = None

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if phi.ndim != 2:
            raise ValidationError("phi must be a K x V matrix")
        if p.ndim != 1 or p.size != phi.shape[1]:
            raise ValidationError("p must be a length-V vector matching phi")
        phi = _normalize_rows(phi, "phi")
        p = _normalize_rows(p[None, :], "p")[0]
        used = p > 0
        if np.any(phi[:, used].max(axis=0) <= 0):
            raise ValidationError("a word with positive frequency has zero mass under every topic")
        if self.n is not None and int(self.n) <= 0:
            raise ValidationError("document length n must be positive when given")
        phi.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "n", None if self.n is None else int(self.n))

    @property
    def num_topics(self) -> int:
        return self.phi.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.phi.shape[1]


@dataclass(frozen=True, eq=False)
class ObjectiveEval:
    """Value with optional gradient and Hessian from one fused evaluation."""

    value: float
    gradient: np.ndarray | None = None
    hessian: np.ndarray | None = None

    def __post_init__(self):
        h = self.hessian
        if h is not None:
            scale = max(1.0, float(np.abs(h).max()))
            if np.abs(h - h.T).max() > 1e-10 * scale:
                raise ValidationError("hessian is not symmetric within 1e-10 relative")


class LdaObjective:
    """H(theta) = sum_v p_v log(theta . phi(v)) and its derivatives."""

    def __init__(self, instance: LdaInstance):
        self.instance = instance
        used = instance.p > 0
        # words with zero frequency never contribute; drop them up front
        self._phi = instance.phi[:, used]
        self._p = instance.p[used]

    @property
    def dim(self) -> int:
        return self.instance.num_topics

    def _mixture(self, theta: np.ndarray) -> np.ndarray:
        return theta @ self._phi

    def value(self, theta) -> float:
        return float(self.value_batch(coords_of(theta)[None, :])[0])

    def value_batch(self, thetas: np.ndarray) -> np.ndarray:
        mix = thetas @ self._phi
        with np.errstate(divide="ignore"):
            logmix = np.log(mix)
        return logmix @ self._p

    def gradient(self, theta) -> np.ndarray:
        return self.evaluate(theta, gradient=True).gradient

    def hessian(self, theta) -> np.ndarray:
        return self.evaluate(theta, hessian=True).hessian

    def evaluate(self, theta, gradient: bool = False, hessian: bool = False) -> ObjectiveEval:
        """Fused value/gradient/Hessian sharing one mixture computation."""
        t = coords_of(theta)
        mix = self._mixture(t)
        if np.any(mix <= 0):
            if gradient or hessian:
                raise ValidationError("gradient/hessian undefined where a mixture value is 0")
            return ObjectiveEval(value=float("-inf"))
        value = float(np.log(mix) @ self._p)
        grad = None
        hess = None
        if gradient or hessian:
            r = self._p / mix
            grad = self._phi @ r
        if hessian:
            scaled = self._phi * (self._p / mix**2)
            hess = -(scaled @ self._phi.T)
            hess = 0.5 * (hess + hess.T)
        return ObjectiveEval(value=value, gradient=grad, hessian=hess)


@dataclass(frozen=True, eq=False)
class KlObjective:
    """Surrogate Hhat(theta) = h_at_star - KL(theta*|theta).

    Hhat is concave, peaks at theta* with value exactly h_at_star, and
    E[exp(n*Hhat)] under Dir(alpha) is B(alpha + n theta*)/B(alpha) times
    exp(n (h_at_star - theta* . log theta*)).
    """

    theta_star: SimplexPoint
    h_at_star: float

    def __post_init__(self):
        if not np.isfinite(self.h_at_star):
            raise ValidationError("h_at_star must be finite")

    @property
    def dim(self) -> int:
        return self.theta_star.dim

    def value(self, theta) -> float:
        return self.h_at_star - kl_divergence(self.theta_star, SimplexPoint(coords_of(theta)))

    def value_batch(self, thetas: np.ndarray) -> np.ndarray:
        ts = self.theta_star.coords
        sup = ts > 0
        with np.errstate(divide="ignore"):
            logs = np.log(thetas[:, sup])
        cross = logs @ ts[sup]                       # sum_k theta*_k log theta_k
        entropy_term = float(np.dot(ts[sup], np.log(ts[sup])))
        return self.h_at_star + cross - entropy_term

    def hessian_at_star(self) -> np.ndarray:
        """Hessian of Hhat at theta*: -1/theta*_i on the support, zero rows elsewhere."""
        ts = self.theta_star.coords
        diag = np.zeros_like(ts)
        sup = ts > 0
        diag[sup] = -1.0 / ts[sup]
        return np.diag(diag)

    def log_expected_exponential(self, alpha, n: float) -> float:
        """Closed form log E_Dir(alpha)[exp(n * Hhat)]."""
        a = coords_of(alpha)
        ts = self.theta_star.coords
        if a.size != ts.size:
            raise ValidationError("dimension mismatch")
        sup = ts > 0
        cross_entropy = float(np.dot(ts[sup], np.log(ts[sup])))
        return (log_multivariate_beta(a + n * ts) - log_multivariate_beta(a)
                + n * (self.h_at_star - cross_entropy))
