"""Shared oracles and fixtures for the test suite.

Finite differences are taken along simplex tangent directions (1^T d = 0)
so probes stay in the affine hull of the domain; the objectives are defined
slightly off the simplex, which is what makes central differences valid.
"""

from __future__ import annotations

import math

import numpy as np

import dirmc


def tangent_directions(rng: np.random.Generator, dim: int, count: int) -> np.ndarray:
    d = rng.standard_normal((count, dim))
    d -= d.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    return d / norms


def fd_directional_gradient(value_fn, theta: np.ndarray, direction: np.ndarray,
                            step: float = 1e-6) -> float:
    return (value_fn(theta + step * direction) - value_fn(theta - step * direction)) / (2 * step)


def fd_directional_hessian(grad_fn, theta: np.ndarray, direction: np.ndarray,
                           step: float = 1e-4) -> np.ndarray:
    return (grad_fn(theta + step * direction) - grad_fn(theta - step * direction)) / (2 * step)


def interior_instance(seed: int, num_topics: int = 3, vocab_size: int = 80,
                      phi_prior: float = 0.5) -> dirmc.PlantedInstance:
    cfg = dirmc.GeneratorConfig(num_topics=num_topics, vocab_size=vocab_size,
                                phi_prior=phi_prior, seed=seed)
    return dirmc.gen_interior_instance(cfg, dirmc.RandomStream(seed))


def boundary_instance(seed: int, num_topics: int = 5, vocab_size: int = 250,
                      planted_zeros: int = 1, lambda_min: float = 0.2,
                      lambda_max: float = 1.0, phi_prior: float = 0.1) -> dirmc.PlantedInstance:
    cfg = dirmc.GeneratorConfig(num_topics=num_topics, vocab_size=vocab_size,
                                phi_prior=phi_prior, planted_zeros=planted_zeros,
                                lambda_min=lambda_min, lambda_max=lambda_max, seed=seed)
    return dirmc.gen_boundary_instance(cfg, dirmc.RandomStream(seed))


def random_interior_point(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.gamma(2.0, size=dim) + 0.05
    return g / g.sum()


def log_to_linear_dev(log_estimate: float, log_truth: float) -> float:
    """|estimate/truth - 1|."""
    return abs(math.exp(log_estimate - log_truth) - 1.0)


def within_se(estimate: dirmc.LogEstimate, log_truth: float, k: float = 3.0) -> bool:
    """|mean - truth| <= k * SE, all in the truth's linear scale."""
    dev = abs(math.exp(estimate.log_mean - log_truth) - 1.0)
    budget = k * math.exp(estimate.log_standard_error - log_truth)
    return dev <= budget


def estimates_agree(a: dirmc.LogEstimate, b: dirmc.LogEstimate, k: float = 3.0) -> bool:
    """|mean_a - mean_b| <= k * combined SE, in a shared linear scale."""
    ref = max(a.log_mean, b.log_mean)
    dev = abs(math.exp(a.log_mean - ref) - math.exp(b.log_mean - ref))
    se = math.hypot(math.exp(a.log_standard_error - ref),
                    math.exp(b.log_standard_error - ref))
    return dev <= k * se
