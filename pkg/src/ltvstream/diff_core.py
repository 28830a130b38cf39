"""Differentiable unnormalized log-densities over a flat parameter vector.

A :class:`DensityGraph` is the object the leapfrog integrator consumes: it
maps a parameter vector (and optionally a bound data batch) to a log-density
value plus its exact gradient. Everything lives in unconstrained space;
constrained quantities are handled by the model that builds the graph
(log-transform plus Jacobian).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

__all__ = ["ParamVector", "DensityGraph", "as_param_vector", "check_gradient"]

# A parameter vector is a plain 1-d float64 array; value semantics are by
# convention (samplers copy before mutating).
ParamVector = np.ndarray


def as_param_vector(values) -> ParamVector:
    """Coerce to a finite 1-d float64 array."""
    theta = np.asarray(values, dtype=np.float64)
    if theta.ndim != 1:
        raise ValueError(f"parameter vector must be 1-d, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameter vector contains non-finite entries")
    return theta


@dataclass(frozen=True)
class DensityGraph:
    """Unnormalized log-density with exact gradient.

    ``eval_fn(theta, batch)`` returns ``(logp, grad)``. ``batch`` is whatever
    data object the graph was built for (``None`` for fixed targets). A
    non-finite log-density is normalized to ``-inf`` with a zero gradient so
    callers can treat out-of-support proposals as rejected rather than fatal.
    """

    dimension: int
    eval_fn: Callable[[np.ndarray, Any], tuple[float, np.ndarray]]
    batch: Any = field(default=None, compare=False)

    def bind(self, batch) -> "DensityGraph":
        """Return a copy of this graph with ``batch`` bound as default data."""
        return replace(self, batch=batch)

    def evaluate(self, theta: np.ndarray, batch=None) -> tuple[float, np.ndarray]:
        """Log-density (up to an additive constant) and gradient at ``theta``."""
        if not isinstance(theta, np.ndarray) or theta.dtype != np.float64:
            theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dimension,):
            raise ValueError(
                f"theta has shape {theta.shape}, graph dimension is {self.dimension}"
            )
        data = batch if batch is not None else self.batch
        logp, grad = self.eval_fn(theta, data)
        if not isinstance(grad, np.ndarray):
            grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != (self.dimension,):
            raise ValueError(
                f"gradient has shape {grad.shape}, expected ({self.dimension},)"
            )
        # any non-finite gradient entry makes the squared norm non-finite
        logp = float(logp)
        if not math.isfinite(logp) or not math.isfinite(float(np.dot(grad, grad))):
            return -np.inf, np.zeros(self.dimension)
        return logp, grad


def check_gradient(
    graph: DensityGraph,
    theta: np.ndarray,
    h: float = 1e-5,
    batch=None,
    abs_floor: float = 1e-8,
) -> float:
    """Max relative error between the analytic gradient and central differences.

    The step for coordinate i is ``h * max(1, |theta_i|)`` so large
    coordinates keep a comparable relative perturbation. Coordinates where the
    finite difference itself is non-finite are reported as ``inf`` (they make
    the check fail loudly rather than silently pass).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    theta = as_param_vector(theta)
    _, grad = graph.evaluate(theta, batch)
    worst = 0.0
    for i in range(graph.dimension):
        step = h * max(1.0, abs(theta[i]))
        up = theta.copy()
        up[i] += step
        dn = theta.copy()
        dn[i] -= step
        f_up, _ = graph.evaluate(up, batch)
        f_dn, _ = graph.evaluate(dn, batch)
        fd = (f_up - f_dn) / (2.0 * step)
        if not np.isfinite(fd):
            return float("inf")
        denom = max(abs(grad[i]), abs(fd), abs_floor)
        worst = max(worst, abs(grad[i] - fd) / denom)
    return worst
