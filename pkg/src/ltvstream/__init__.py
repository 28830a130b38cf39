"""Streaming mini-batch NUTS for hierarchical Bayesian LTV models.

One-pass, drift-adaptive Bayesian regression: streaming categorical encoding
and online target scaling feed a NUTS sampler whose state carries across
mini-batches, with prequential (progressive validation) scoring of every
batch before it is fit. Ships two hierarchical models over category effects
with Horseshoe shrinkage: a fat-tail-aware Student-t likelihood and a
Gaussian baseline.
"""

from .diff_core import DensityGraph, check_gradient
from .models import ModelSpec, build_density, fat_tail_report, posterior_predictive
from .nuts import SamplerConfig, run_online, sample, warmup
from .preprocess import RobustScaler, StandardScaler, StreamingOrdinalEncoder
from .runner import RunConfig, run

__version__ = "0.1.0"

__all__ = [
    "DensityGraph",
    "check_gradient",
    "ModelSpec",
    "build_density",
    "posterior_predictive",
    "fat_tail_report",
    "SamplerConfig",
    "warmup",
    "sample",
    "run_online",
    "StreamingOrdinalEncoder",
    "StandardScaler",
    "RobustScaler",
    "RunConfig",
    "run",
]
