"""Gauss-Jacobi reference values for desk-scale problems (K <= 3).

The Dirichlet density on the projected simplex factors into per-axis Jacobi
weights y^(a-1) (1-y)^(b-1), so tensorized Gauss-Jacobi rules integrate
exp(mult * n * H) exactly against the boundary singularities (alpha_i < 1)
without any transformation.  Node counts double until the log value moves
less than ``tol``; the last movement is reported as the error estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, roots_jacobi

from .errors import NumericalError, ValidationError
from .simplex import DirichletParams, log_multivariate_beta


@dataclass(frozen=True)
class QuadratureResult:
    log_value: float
    error_estimate: float      # |change in log value| at the final node doubling
    nodes_per_axis: int


def _axis_rule(num_nodes: int, p: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes in (0,1) and log-weights for integral of f(y) y^(p-1) (1-y)^(q-1) dy."""
    x, w = roots_jacobi(num_nodes, q - 1.0, p - 1.0)
    y = 0.5 * (x + 1.0)
    log_w = np.log(w) + (1.0 - p - q) * math.log(2.0)
    return y, log_w


def _log_integral(objective, alpha: np.ndarray, exponent: float, num_nodes: int) -> float:
    K = alpha.size
    if K == 1:
        return float(exponent) * float(objective.value(np.array([1.0])))
    if K == 2:
        y, log_w = _axis_rule(num_nodes, alpha[0], alpha[1])
        thetas = np.column_stack([y, 1.0 - y])
        log_f = exponent * objective.value_batch(thetas)
        return float(logsumexp(log_w + log_f)) - log_multivariate_beta(alpha)
    # K == 3: inner coordinate rescaled to [0,1]; its Jacobian has been folded
    # into the outer axis exponents (a1, a2 + a3)
    y1, log_w1 = _axis_rule(num_nodes, alpha[0], alpha[1] + alpha[2])
    t, log_w2 = _axis_rule(num_nodes, alpha[1], alpha[2])
    t1 = np.repeat(y1, num_nodes)
    t2 = (1.0 - t1) * np.tile(t, num_nodes)
    thetas = np.column_stack([t1, t2, 1.0 - t1 - t2])
    log_f = exponent * objective.value_batch(thetas)
    log_w = (log_w1[:, None] + log_w2[None, :]).ravel()
    return float(logsumexp(log_w + log_f)) - log_multivariate_beta(alpha)


def quadrature_reference(objective, alpha: DirichletParams, n: float,
                         exponent_multiplier: int = 1, *, base_nodes: int = 64,
                         tol: float = 1e-9, max_nodes: int = 16384) -> QuadratureResult:
    """log E_Dir(alpha)[exp(mult * n * H(theta))] by adaptive Gauss-Jacobi.

    Supports K <= 3.  ``exponent_multiplier`` of 2 gives the second moment.
    Raises when the node-doubling ladder hits ``max_nodes`` without the log
    value settling within ``tol``.
    """
    a = alpha.alpha
    if a.size > 3:
        raise ValidationError("quadrature reference supports K <= 3 only")
    if exponent_multiplier not in (1, 2):
        raise ValidationError("exponent_multiplier must be 1 or 2")
    if n < 0:
        raise ValidationError("n must be non-negative")
    if a.size == 3:
        max_nodes = min(max_nodes, 4096)

    exponent = float(exponent_multiplier) * float(n)
    nodes = base_nodes
    prev = _log_integral(objective, a, exponent, nodes)
    while nodes * 2 <= max_nodes:
        nodes *= 2
        cur = _log_integral(objective, a, exponent, nodes)
        err = abs(cur - prev)
        if err < tol:
            return QuadratureResult(log_value=cur, error_estimate=err, nodes_per_axis=nodes)
        prev = cur
    raise NumericalError(
        f"quadrature did not settle within {tol} by {nodes} nodes per axis")
