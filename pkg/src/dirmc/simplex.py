"""Simplex geometry, Dirichlet sampling and densities, seeded random streams.

Conventions used throughout the package:

* A point of the (K-1)-simplex is a length-K vector with non-negative
  entries summing to one; ``SimplexPoint`` enforces this at construction
  (renormalizing sums within 1e-9 of one, rejecting anything further off).
* Densities, likelihood ratios and every derived weight live on the log
  scale end to end.  Linear-scale values only appear inside log-sum-exp
  reductions.  Boundary evaluations follow extended-real conventions
  (documented per function) instead of raising.
* Randomness flows through ``RandomStream``: a (seed, stream-key) pair that
  reproduces the same draw sequence on every call.  Derived sub-streams are
  statistically independent, which is how chunked estimators stay bitwise
  deterministic regardless of worker-thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import ValidationError

SUM_ABS_TOL = 1e-12        # invariant tolerance on the coordinate sum
RENORM_TOL = 1e-9          # constructors renormalize within this, reject beyond
NEG_CLAMP = 1e-12          # coordinates in [-NEG_CLAMP, 0) are treated as 0
ALPHA_CAP = 1e12           # log-gamma accuracy limit for Dirichlet parameters


def coords_of(point) -> np.ndarray:
    """Array view of a SimplexPoint, DirichletParams, or array-like."""
    inner = getattr(point, "coords", None)
    if inner is None:
        inner = getattr(point, "alpha", point)
    return np.asarray(inner, dtype=float)


@dataclass(frozen=True, eq=False)
class SimplexPoint:
    """Non-negative vector summing to one.

    Inputs whose sum is within 1e-9 of one are renormalized (tolerating I/O
    rounding); anything further off is rejected.  Tiny negative coordinates
    (>= -1e-12) are clamped to zero.
    """

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).copy()
        if c.ndim != 1 or c.size < 1:
            raise ValidationError("simplex point must be a 1-d vector")
        if not np.all(np.isfinite(c)):
            raise ValidationError("simplex point has non-finite coordinates")
        neg = c < 0
        if np.any(c < -NEG_CLAMP):
            raise ValidationError(f"negative coordinate: min={c.min():.3e}")
        c[neg] = 0.0
        s = c.sum()
        if abs(s - 1.0) > RENORM_TOL:
            raise ValidationError(f"coordinates sum to {s!r}, not 1 within {RENORM_TOL}")
        if abs(s - 1.0) > SUM_ABS_TOL:
            # renormalizing only outside the invariant tolerance keeps the
            # constructor idempotent at the bit level (exact file round trips)
            c /= s
        c.flags.writeable = False
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return self.coords.size

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.coords > 0))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    @classmethod
    def uniform(cls, dim: int) -> "SimplexPoint":
        return cls(np.full(dim, 1.0 / dim))


@dataclass(frozen=True, eq=False)
class DirichletParams:
    """Strictly positive Dirichlet parameter vector."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float).copy()
        if a.ndim != 1 or a.size < 1:
            raise ValidationError("alpha must be a 1-d vector")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise ValidationError("alpha entries must be finite and strictly positive")
        if np.any(a > ALPHA_CAP):
            raise ValidationError(f"alpha entries above {ALPHA_CAP:.0e} exceed log-gamma accuracy")
        a.flags.writeable = False
        object.__setattr__(self, "alpha", a)

    @property
    def dim(self) -> int:
        return self.alpha.size

    @property
    def total(self) -> float:
        return float(self.alpha.sum())

    @classmethod
    def symmetric(cls, value: float, dim: int) -> "DirichletParams":
        return cls(np.full(dim, float(value)))


@dataclass(frozen=True)
class RandomStream:
    """Seeded, replayable randomness source.

    ``generator()`` returns a fresh ``numpy.random.Generator`` positioned at
    the start of the stream, so the same (seed, stream) pair always yields
    the identical draw sequence.  ``child(i)`` derives statistically
    independent sub-streams; parallel consumers must use disjoint children.
    """

    seed: int
    stream: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if isinstance(self.stream, int):
            object.__setattr__(self, "stream", (self.stream,))
        else:
            object.__setattr__(self, "stream", tuple(int(i) for i in self.stream))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=self.stream))

    def child(self, index: int) -> "RandomStream":
        return RandomStream(self.seed, self.stream + (int(index),))


def derive_seed(base_seed: int, *key: int) -> int:
    """Deterministic 63-bit seed derived from a base seed and an index path."""
    ss = np.random.SeedSequence(base_seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def _gamma_batch(alpha: np.ndarray, rng: np.random.Generator, size: int) -> np.ndarray:
    g = rng.standard_gamma(alpha, size=(size, alpha.size))
    s = g.sum(axis=1)
    # a row of all-underflowed gammas (possible for tiny alpha) is redrawn
    while True:
        bad = np.flatnonzero(s == 0.0)
        if bad.size == 0:
            break
        g[bad] = rng.standard_gamma(alpha, size=(bad.size, alpha.size))
        s[bad] = g[bad].sum(axis=1)
    return g / s[:, None]


def sample_dirichlet(params: DirichletParams, stream: RandomStream, size: int | None = None):
    """Draw from Dir(alpha) by normalizing independent Gamma(alpha_i, 1) draws.

    With ``size=None`` returns a single ``SimplexPoint``; with an integer
    returns a ``(size, K)`` array of rows on the simplex.
    """
    rng = stream.generator()
    if size is None:
        return SimplexPoint(_gamma_batch(params.alpha, rng, 1)[0])
    if size < 0:
        raise ValidationError("size must be non-negative")
    return _gamma_batch(params.alpha, rng, int(size))


def log_multivariate_beta(alpha) -> float:
    """log B(alpha) = sum_i log Gamma(alpha_i) - log Gamma(sum_i alpha_i)."""
    a = coords_of(alpha)
    if np.any(a <= 0):
        raise ValidationError("multivariate Beta requires strictly positive arguments")
    if np.any(a > ALPHA_CAP):
        raise ValidationError(f"arguments above {ALPHA_CAP:.0e} exceed log-gamma accuracy")
    return float(gammaln(a).sum() - gammaln(a.sum()))


def log_dirichlet_density(params: DirichletParams, point: SimplexPoint) -> float:
    """log Dir_alpha(theta) = sum_i (alpha_i - 1) log theta_i - log B(alpha).

    Extended-real conventions on the boundary: a zero coordinate contributes
    +inf when alpha_i < 1 (singular face), -inf when alpha_i > 1 (vanishing
    density), and 0 when alpha_i = 1.  If both singular and vanishing zeros
    occur (a measure-zero corner with no canonical limit) the singular +inf
    takes precedence.
    """
    a = params.alpha
    t = coords_of(point)
    if a.size != t.size:
        raise ValidationError("dimension mismatch between alpha and theta")
    zero = t == 0.0
    if np.any(zero):
        if np.any(a[zero] < 1.0):
            return float("inf")
        if np.any(a[zero] > 1.0):
            return float("-inf")
    pos = ~zero
    return float(np.dot(a[pos] - 1.0, np.log(t[pos])) - log_multivariate_beta(a))


def kl_divergence(p_star: SimplexPoint, theta: SimplexPoint) -> float:
    """KL(p*|theta) = sum_k p*_k log(p*_k / theta_k).

    Uses the conventions 0 log 0 = 0 and 0 log(inf) = 0; returns +inf when
    some theta_k = 0 while p*_k > 0.
    """
    ps = coords_of(p_star)
    t = coords_of(theta)
    if ps.size != t.size:
        raise ValidationError("dimension mismatch")
    sup = ps > 0.0
    if np.any(t[sup] == 0.0):
        return float("inf")
    return float(np.dot(ps[sup], np.log(ps[sup]) - np.log(t[sup])))


@dataclass(frozen=True)
class TruncationSpec:
    """Membership rule for the truncated simplex around a reference point.

    ``absolute`` keeps theta with theta_i >= epsilon on the support of the
    reference point; ``relative`` keeps theta_i >= epsilon * theta*_i there.
    Absolute mode additionally requires epsilon below every supported
    theta*_i so the reference point itself is retained.
    """

    epsilon: float
    mode: str = "relative"
    support: tuple[int, ...] = ()

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ValidationError("epsilon must lie strictly inside (0, 1)")
        if self.mode not in ("absolute", "relative"):
            raise ValidationError(f"unknown truncation mode {self.mode!r}")
        object.__setattr__(self, "support", tuple(sorted(int(i) for i in set(self.support))))

    @classmethod
    def for_theta_star(cls, theta_star: SimplexPoint, epsilon: float,
                       mode: str = "relative") -> "TruncationSpec":
        ts = coords_of(theta_star)
        support = tuple(int(i) for i in np.flatnonzero(ts > 0))
        if not support:
            raise ValidationError("reference point has empty support")
        if mode == "absolute" and epsilon >= ts[list(support)].min():
            raise ValidationError(
                "absolute epsilon must stay below every supported coordinate "
                "of the reference point (it would otherwise be truncated away)")
        return cls(epsilon=epsilon, mode=mode, support=support)


def in_truncated_simplex(theta: SimplexPoint, theta_star: SimplexPoint,
                         spec: TruncationSpec) -> bool:
    """Whether theta lies in the truncated simplex defined by spec."""
    ts = coords_of(theta_star)
    expected = tuple(int(i) for i in np.flatnonzero(ts > 0))
    if spec.support != expected:
        raise ValidationError("spec.support does not match the support of theta_star")
    return bool(truncation_mask(coords_of(theta)[None, :], ts, spec)[0])


def truncation_mask(thetas: np.ndarray, theta_star: np.ndarray,
                    spec: TruncationSpec) -> np.ndarray:
    """Vectorized membership test; rows of ``thetas`` against the spec."""
    idx = np.fromiter(spec.support, dtype=int)
    block = thetas[:, idx]
    if spec.mode == "absolute":
        return np.all(block >= spec.epsilon, axis=1)
    return np.all(block >= spec.epsilon * theta_star[idx], axis=1)
