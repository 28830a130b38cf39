"""Distribution kernels and random sampling used across the package.

Log-densities are exact (normalization included) and vectorize over numpy
arrays. Randomness goes through numpy's Philox bit generator, a counter-based
64-bit algorithm with a documented, portable stream: the same seed yields the
same draws on every platform. Generators are single-owner; to parallelize,
``split_rng`` into independent child streams.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

__all__ = [
    "RngState",
    "StudentTParams",
    "make_rng",
    "split_rng",
    "logpdf_normal",
    "logpdf_student_t",
    "logpdf_half_cauchy",
    "sample_student_t",
    "sample_truncated",
]

# Alias kept for signature clarity: an RngState *is* a numpy Generator whose
# bit generator is Philox.
RngState = np.random.Generator

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_2_OVER_PI = math.log(2.0 / math.pi)


class StudentTParams(NamedTuple):
    """Location/scale/degrees-of-freedom triple; nu=1 is Cauchy, nu→inf Gaussian."""

    mu: float
    sigma: float
    nu: float


def make_rng(seed: int) -> RngState:
    """Philox generator seeded through a SeedSequence."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def split_rng(rng: RngState, n: int) -> list[RngState]:
    """n independent child generators (parent stream is not consumed)."""
    return rng.spawn(n)


def logpdf_normal(x, mu, sigma):
    """Exact Normal log-density; vectorizes over any argument."""
    x, mu, sigma = np.asarray(x), np.asarray(mu), np.asarray(sigma)
    z = (x - mu) / sigma
    return -0.5 * z * z - np.log(sigma) - 0.5 * _LOG_2PI


def logpdf_student_t(x, mu, sigma, nu):
    """Exact Student-t log-density including the log-Gamma normalization."""
    x, mu, sigma, nu = map(np.asarray, (x, mu, sigma, nu))
    z = (x - mu) / sigma
    return (
        gammaln((nu + 1.0) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * np.log(np.pi * nu)
        - np.log(sigma)
        - (nu + 1.0) / 2.0 * np.log1p(z * z / nu)
    )


def logpdf_half_cauchy(x, scale):
    """Half-Cauchy log-density on [0, inf); -inf below the support."""
    x, scale = np.asarray(x, dtype=np.float64), np.asarray(scale)
    z = x / scale
    out = _LOG_2_OVER_PI - np.log(scale) - np.log1p(z * z)
    return np.where(x < 0, -np.inf, out)


def sample_student_t(mu, sigma, nu, rng: RngState, size=None):
    """Draw Student-t via mu + sigma * z / sqrt(g/nu), z~N(0,1), g~chi2(nu)."""
    if size is None:
        size = np.broadcast_shapes(np.shape(mu), np.shape(sigma), np.shape(nu))
    z = rng.standard_normal(size)
    g = rng.chisquare(nu, size)
    return np.asarray(mu) + np.asarray(sigma) * z / np.sqrt(g / np.asarray(nu))


def sample_truncated(
    mu,
    sigma,
    nu,
    lower,
    rng: RngState,
    max_attempts: int = 100,
    size=None,
):
    """Rejection-sampled Student-t draws constrained to ``>= lower``.

    Each entry gets up to ``max_attempts`` fresh proposals; entries still
    below the bound afterwards are clamped to ``lower`` (bounded latency is
    preferred over an exact but unbounded sampler). Returns
    ``(draws, n_exhausted)`` where ``n_exhausted`` counts clamped entries.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    values = sample_student_t(mu, sigma, nu, rng, size)
    scalar = np.ndim(values) == 0
    values = np.atleast_1d(np.asarray(values, dtype=np.float64))
    mu_b = np.broadcast_to(np.asarray(mu, dtype=np.float64), values.shape)
    sigma_b = np.broadcast_to(np.asarray(sigma, dtype=np.float64), values.shape)
    nu_b = np.broadcast_to(np.asarray(nu, dtype=np.float64), values.shape)
    pending = values < lower
    attempts = 1
    while pending.any() and attempts < max_attempts:
        idx = np.nonzero(pending.ravel())[0]
        redraw = sample_student_t(
            mu_b.ravel()[idx], sigma_b.ravel()[idx], nu_b.ravel()[idx], rng
        )
        flat = values.ravel()
        flat[idx] = redraw
        values = flat.reshape(values.shape)
        pending = values < lower
        attempts += 1
    n_exhausted = int(pending.sum())
    if n_exhausted:
        values[pending] = lower
    if scalar:
        return float(values[0]), n_exhausted
    return values, n_exhausted
