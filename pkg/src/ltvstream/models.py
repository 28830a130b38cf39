"""Hierarchical regression models for cohort revenue with selectable tails.

Two fixed models share one structure: a global base location/scale (plus base
degrees of freedom for the Student-t variant) and per-category effects under
global-local (Horseshoe) shrinkage with non-centered parameterization. Each
effect is ``z * lambda * tau`` with ``z ~ N(0,1)``, ``lambda ~ HalfCauchy(1)``
local and ``tau ~ HalfCauchy(tau0)`` global. Per-observation likelihood
parameters compose as::

    mu(c)    = base_mu + mu_effect[c]
    sigma(c) = exp(base_log_sigma) + |sigma_effect[c]|
    nu(c)    = exp(base_log_df)    + |df_effect[c]|      (Student-t only)

so positivity of scale and degrees of freedom is guaranteed by construction.
All positive quantities are sampled in log space with the Jacobian folded
into the log-density. Gradients are hand-derived and vectorized; the
finite-difference check in :mod:`ltvstream.diff_core` is the contract.

Parameter vector layout (capacity C), in order:

    base_mu, base_log_sigma, [base_log_df],
    then per effect family f in (mu, [sigma], [df]):
        f_z[0..C), f_loglambda[0..C), f_logtau

Bracketed blocks exist only when the family is enabled. The layout is fixed
for the lifetime of a model spec so sampler state can carry across batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import digamma, gammaln

from . import _kernels
from .diff_core import DensityGraph
from .distributions import (
    RngState,
    logpdf_normal,
    logpdf_student_t,
    sample_truncated,
)

__all__ = [
    "ModelSpec",
    "ParamLayout",
    "ObservationBatch",
    "PosteriorPredictive",
    "FatTailRow",
    "UnsupportedModelError",
    "build_density",
    "sample_prior",
    "posterior_predictive",
    "predictive_logdensity",
    "fat_tail_report",
]

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_2_OVER_PI = math.log(2.0 / math.pi)

GAUSSIAN_NU = np.inf  # sentinel reported for the Gaussian variant


class UnsupportedModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Configuration of one model instance.

    ``category_capacity`` must match the encoder capacity: codes index the
    effect arrays directly. Hyperprior scales are configurable; defaults are
    documented choices, not canonical values. ``df_prior_scale`` applies a
    Half-Cauchy to the base degrees of freedom, making near-Gaussian tails
    cheap to reach and Cauchy-like tails require evidence.
    """

    likelihood: str = "student_t"
    category_capacity: int = 1024
    tau0: float | None = None  # None -> 1 / category_capacity
    df_prior_scale: float = 5.0
    base_mu_scale: float = 10.0
    base_sigma_scale: float = 2.0
    lambda_scale: float = 1.0
    per_category_sigma: bool = True

    def __post_init__(self):
        if self.likelihood not in ("student_t", "gaussian"):
            raise ValueError(f"unknown likelihood {self.likelihood!r}")
        if self.category_capacity < 1:
            raise ValueError("category_capacity must be >= 1")

    @property
    def is_student_t(self) -> bool:
        return self.likelihood == "student_t"

    def resolved_tau0(self) -> float:
        return self.tau0 if self.tau0 is not None else 1.0 / self.category_capacity

    def layout(self) -> "ParamLayout":
        return ParamLayout.build(self)

    @property
    def dimension(self) -> int:
        return self.layout().dimension


@dataclass(frozen=True)
class ParamLayout:
    """Named index ranges into the flat parameter vector."""

    capacity: int
    families: tuple[str, ...]
    base_mu: int
    base_log_sigma: int
    base_log_df: int | None
    z: dict
    loglam: dict
    logtau: dict
    dimension: int

    @classmethod
    def build(cls, spec: ModelSpec) -> "ParamLayout":
        families = ["mu"]
        if spec.per_category_sigma:
            families.append("sigma")
        if spec.is_student_t:
            families.append("df")
        offset = 2 + (1 if spec.is_student_t else 0)
        base_log_df = 2 if spec.is_student_t else None
        z, loglam, logtau = {}, {}, {}
        c = spec.category_capacity
        for fam in families:
            z[fam] = slice(offset, offset + c)
            offset += c
            loglam[fam] = slice(offset, offset + c)
            offset += c
            logtau[fam] = offset
            offset += 1
        return cls(
            capacity=c,
            families=tuple(families),
            base_mu=0,
            base_log_sigma=1,
            base_log_df=base_log_df,
            z=z,
            loglam=loglam,
            logtau=logtau,
            dimension=offset,
        )


@dataclass
class ObservationBatch:
    """One mini-batch as the density consumes it: codes plus scaled targets."""

    codes: np.ndarray
    y_scaled: np.ndarray

    def __post_init__(self):
        if self.codes.shape != self.y_scaled.shape:
            raise ValueError("codes and targets must have equal length")

    def __len__(self) -> int:
        return self.codes.shape[0]


def _category_counts(batch, codes: np.ndarray, capacity: int) -> np.ndarray:
    """Per-category row counts, validated and cached on the batch object."""
    counts = getattr(batch, "_counts_cache", None)
    if counts is None or counts.shape[0] != capacity:
        _check_codes(codes, capacity)
        counts = np.bincount(codes, minlength=capacity).astype(np.float64)
        try:
            batch._counts_cache = counts
        except AttributeError:
            pass
    return counts


def _check_codes(codes: np.ndarray, capacity: int) -> None:
    if codes.size and (codes.min() < 0 or codes.max() >= capacity):
        raise ValueError(
            f"category codes must lie in [0, {capacity}), got range "
            f"[{codes.min()}, {codes.max()}]"
        )


# -- log Half-Cauchy prior on exp(l), Jacobian included ----------------------
#
#   lp(l) = log(2/pi) - log(s) + l - log(1 + exp(2*(l - log s)))
#   d lp / d l = 1 - 2*sigmoid(2*(l - log s)) = -tanh(l - log s)


def _log_half_cauchy_transformed(l, scale):
    a = l - math.log(scale)
    return _LOG_2_OVER_PI - math.log(scale) + l - np.logaddexp(0.0, 2.0 * a)


def _grad_log_half_cauchy_transformed(l, scale):
    return -np.tanh(l - math.log(scale))


def _unpack(spec: ModelSpec, layout: ParamLayout, theta: np.ndarray):
    """Transformed per-category likelihood parameters plus effect pieces."""
    c = layout.capacity
    base_mu = theta[layout.base_mu]
    base_sigma = np.exp(theta[layout.base_log_sigma])
    effects = {}
    for fam in layout.families:
        z = theta[layout.z[fam]]
        lam = np.exp(theta[layout.loglam[fam]])
        tau = np.exp(theta[layout.logtau[fam]])
        effects[fam] = (z, lam, tau, z * lam * tau)
    mu_c = base_mu + effects["mu"][3]
    if "sigma" in effects:
        sigma_c = base_sigma + np.abs(effects["sigma"][3])
    else:
        sigma_c = np.full(c, base_sigma)
    if spec.is_student_t:
        base_df = np.exp(theta[layout.base_log_df])
        if "df" in effects:
            nu_c = base_df + np.abs(effects["df"][3])
        else:  # pragma: no cover - df family always on for student_t
            nu_c = np.full(c, base_df)
    else:
        base_df = None
        nu_c = None
    return base_mu, base_sigma, base_df, effects, mu_c, sigma_c, nu_c


def _eval_density(spec: ModelSpec, layout: ParamLayout, theta, batch):
    codes = batch.codes
    y = batch.y_scaled
    c = layout.capacity
    counts = _category_counts(batch, codes, c)

    if _kernels.HAVE_NUMBA:
        grad = np.zeros(layout.dimension)
        logp = _kernels.model_eval(
            theta,
            y,
            codes,
            counts,
            c,
            spec.is_student_t,
            spec.per_category_sigma,
            spec.base_mu_scale,
            spec.base_sigma_scale,
            spec.df_prior_scale,
            spec.lambda_scale,
            spec.resolved_tau0(),
            grad,
        )
        return logp, grad

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _eval_density_numpy(spec, layout, theta, batch, counts)


def _eval_density_numpy(spec: ModelSpec, layout: ParamLayout, theta, batch, counts):
    codes = batch.codes
    y = batch.y_scaled
    c = layout.capacity
    base_mu, base_sigma, base_df, effects, mu_c, sigma_c, nu_c = _unpack(
        spec, layout, theta
    )
    grad = np.zeros(layout.dimension)

    # priors ------------------------------------------------------------
    logp = (
        -0.5 * (base_mu / spec.base_mu_scale) ** 2
        - math.log(spec.base_mu_scale)
        - 0.5 * _LOG_2PI
    )
    grad[layout.base_mu] = -base_mu / spec.base_mu_scale**2

    logp += float(
        _log_half_cauchy_transformed(theta[layout.base_log_sigma], spec.base_sigma_scale)
    )
    grad[layout.base_log_sigma] = _grad_log_half_cauchy_transformed(
        theta[layout.base_log_sigma], spec.base_sigma_scale
    )

    if spec.is_student_t:
        logp += float(
            _log_half_cauchy_transformed(theta[layout.base_log_df], spec.df_prior_scale)
        )
        grad[layout.base_log_df] = _grad_log_half_cauchy_transformed(
            theta[layout.base_log_df], spec.df_prior_scale
        )

    tau0 = spec.resolved_tau0()
    for fam in layout.families:
        z_sl, l_sl, t_ix = layout.z[fam], layout.loglam[fam], layout.logtau[fam]
        z = theta[z_sl]
        logp += -0.5 * float(np.dot(z, z)) - 0.5 * c * _LOG_2PI
        grad[z_sl] = -z
        logp += float(np.sum(_log_half_cauchy_transformed(theta[l_sl], spec.lambda_scale)))
        grad[l_sl] = _grad_log_half_cauchy_transformed(theta[l_sl], spec.lambda_scale)
        logp += float(_log_half_cauchy_transformed(theta[t_ix], tau0))
        grad[t_ix] = _grad_log_half_cauchy_transformed(theta[t_ix], tau0)

    # likelihood ----------------------------------------------------------
    # transcendental terms are evaluated once per category and gathered per
    # row; only row-varying terms touch full-length arrays
    inv_sigma_c = 1.0 / sigma_c

    if spec.is_student_t:
        const_c = (
            gammaln((nu_c + 1.0) / 2.0)
            - gammaln(nu_c / 2.0)
            - 0.5 * np.log(np.pi * nu_c)
            - np.log(sigma_c)
        )
        dig_c = 0.5 * (digamma((nu_c + 1.0) / 2.0) - digamma(nu_c / 2.0)) - 0.5 / nu_c
        # unused categories contribute nothing; guard 0 * inf for extreme
        # parameters of categories with no rows
        logp += float(np.dot(counts, np.where(counts > 0, const_c, 0.0)))
        nu_r = nu_c[codes]
        resid = (y - mu_c[codes]) * inv_sigma_c[codes]
        r2 = resid * resid
        log_term = np.log1p(r2 / nu_r)
        a = (nu_r + 1.0) / (nu_r + r2)
        ar2 = a * r2
        logp += -0.5 * float(np.dot(nu_r + 1.0, log_term))
        inv_sigma_r = inv_sigma_c[codes]
        dmu_c = np.bincount(codes, weights=a * resid * inv_sigma_r, minlength=c)
        dsigma_c = np.bincount(codes, weights=(ar2 - 1.0) * inv_sigma_r, minlength=c)
        dnu_r = dig_c[codes] - 0.5 * log_term + ar2 / (2.0 * nu_r)
        dnu_c = np.bincount(codes, weights=dnu_r, minlength=c)
    else:
        logp += float(np.dot(counts, np.where(counts > 0, -np.log(sigma_c), 0.0)))
        logp += -0.5 * len(y) * _LOG_2PI
        resid = (y - mu_c[codes]) * inv_sigma_c[codes]
        r2 = resid * resid
        logp += -0.5 * float(np.sum(r2))
        inv_sigma_r = inv_sigma_c[codes]
        dmu_c = np.bincount(codes, weights=resid * inv_sigma_r, minlength=c)
        dsigma_c = np.bincount(codes, weights=(r2 - 1.0) * inv_sigma_r, minlength=c)
        dnu_c = None

    # chain rule into the unconstrained vector ---------------------------
    grad[layout.base_mu] += dmu_c.sum()
    grad[layout.base_log_sigma] += dsigma_c.sum() * base_sigma
    if spec.is_student_t:
        grad[layout.base_log_df] += dnu_c.sum() * base_df

    fam_grads = {"mu": dmu_c}
    if "sigma" in layout.families:
        fam_grads["sigma"] = dsigma_c * np.sign(effects["sigma"][3])
    if "df" in layout.families:
        fam_grads["df"] = dnu_c * np.sign(effects["df"][3])

    for fam, g_eff in fam_grads.items():
        z, lam, tau, eff = effects[fam]
        grad[layout.z[fam]] += g_eff * lam * tau
        grad[layout.loglam[fam]] += g_eff * eff
        grad[layout.logtau[fam]] += np.dot(g_eff, eff)

    return logp, grad


def build_density(spec: ModelSpec, batch: ObservationBatch | None = None) -> DensityGraph:
    """Unnormalized log posterior as a :class:`DensityGraph`.

    The returned graph is rebindable: pass a different batch to
    ``evaluate``/``bind`` to score the same parameters against new data, which
    is exactly what the online driver does between mini-batches.
    """
    layout = spec.layout()
    if batch is not None:
        _check_codes(batch.codes, layout.capacity)

    def eval_fn(theta, data):
        if data is None:
            raise ValueError("no data batch bound to this density")
        return _eval_density(spec, layout, theta, data)

    return DensityGraph(dimension=layout.dimension, eval_fn=eval_fn, batch=batch)


def sample_prior(spec: ModelSpec, rng: RngState) -> np.ndarray:
    """One draw from the prior in unconstrained space."""
    layout = spec.layout()
    theta = np.zeros(layout.dimension)
    theta[layout.base_mu] = rng.normal(0.0, spec.base_mu_scale)
    theta[layout.base_log_sigma] = np.log(
        spec.base_sigma_scale * np.abs(rng.standard_cauchy())
    )
    if spec.is_student_t:
        theta[layout.base_log_df] = np.log(
            spec.df_prior_scale * np.abs(rng.standard_cauchy())
        )
    tau0 = spec.resolved_tau0()
    for fam in layout.families:
        theta[layout.z[fam]] = rng.standard_normal(layout.capacity)
        theta[layout.loglam[fam]] = np.log(
            spec.lambda_scale * np.abs(rng.standard_cauchy(layout.capacity))
        )
        theta[layout.logtau[fam]] = np.log(tau0 * np.abs(rng.standard_cauchy()))
    return theta


def _per_draw_params(spec: ModelSpec, layout: ParamLayout, draws: np.ndarray):
    """Per-category likelihood params for each draw: three (s, C) matrices."""
    s = draws.shape[0]
    c = layout.capacity
    base_mu = draws[:, layout.base_mu][:, None]
    base_sigma = np.exp(draws[:, layout.base_log_sigma])[:, None]

    def effect(fam):
        z = draws[:, layout.z[fam]]
        lam = np.exp(draws[:, layout.loglam[fam]])
        tau = np.exp(draws[:, layout.logtau[fam]])[:, None]
        return z * lam * tau

    mu = base_mu + effect("mu")
    if "sigma" in layout.families:
        sigma = base_sigma + np.abs(effect("sigma"))
    else:
        sigma = np.broadcast_to(base_sigma, (s, c)).copy()
    if spec.is_student_t:
        base_df = np.exp(draws[:, layout.base_log_df])[:, None]
        nu = base_df + np.abs(effect("df"))
    else:
        nu = np.full((s, c), GAUSSIAN_NU)
    return mu, sigma, nu


@dataclass
class PosteriorPredictive:
    """Truncated predictive draws plus per-row parameter summaries.

    ``draws`` has shape (rows, s) in unscaled target units, already truncated
    at ``lower``. Summaries are posterior means of the per-row likelihood
    parameters (``nu_mean`` is +inf for the Gaussian variant).
    """

    draws: np.ndarray
    mu_mean: np.ndarray
    sigma_mean: np.ndarray
    nu_mean: np.ndarray
    n_exhausted: int


def posterior_predictive(
    spec: ModelSpec,
    draws: np.ndarray,
    codes: np.ndarray,
    rng: RngState,
    unscale: tuple[float, float] = (0.0, 1.0),
    lower: float = 0.0,
    max_attempts: int = 100,
) -> PosteriorPredictive:
    """One truncated predictive draw per (row, posterior draw) pair.

    Draws are generated in scaled space and mapped through the affine
    ``center + spread * value``; because the map is increasing, rejecting
    below ``lower`` in unscaled units equals rejecting below its preimage, so
    rejection runs vectorized in scaled space. Exhausted entries clamp to
    ``lower`` and are counted.
    """
    if draws.ndim != 2 or draws.shape[0] < 1:
        raise ValueError("draws must be a nonempty (s, dimension) matrix")
    layout = spec.layout()
    _check_codes(codes, layout.capacity)
    center, spread = unscale
    if spread <= 0:
        spread = 1.0
        center = 0.0
    mu, sigma, nu = _per_draw_params(spec, layout, draws)
    # (rows, s) per-element parameters
    mu_r = mu[:, codes].T
    sigma_r = sigma[:, codes].T
    lower_scaled = (lower - center) / spread
    if spec.is_student_t:
        nu_r = nu[:, codes].T
        scaled, n_exhausted = sample_truncated(
            mu_r, sigma_r, nu_r, lower_scaled, rng, max_attempts, size=mu_r.shape
        )
    else:
        scaled = mu_r + sigma_r * rng.standard_normal(mu_r.shape)
        pending = scaled < lower_scaled
        attempts = 1
        while pending.any() and attempts < max_attempts:
            idx = np.nonzero(pending)
            scaled[idx] = mu_r[idx] + sigma_r[idx] * rng.standard_normal(idx[0].size)
            pending = scaled < lower_scaled
            attempts += 1
        n_exhausted = int(pending.sum())
        scaled[pending] = lower_scaled
    values = center + spread * scaled
    # guard the affine image of the clamp against roundoff
    np.maximum(values, lower, out=values)
    return PosteriorPredictive(
        draws=values,
        mu_mean=mu[:, codes].mean(axis=0),
        sigma_mean=sigma[:, codes].mean(axis=0),
        nu_mean=nu[:, codes].mean(axis=0),
        n_exhausted=n_exhausted,
    )


def predictive_logdensity(
    spec: ModelSpec,
    draws: np.ndarray,
    codes: np.ndarray,
    y_raw: np.ndarray,
    unscale: tuple[float, float] = (0.0, 1.0),
) -> np.ndarray:
    """Untruncated predictive log-density of each actual, per posterior draw.

    Returns a (rows, s) matrix of ``log p(y_i | theta_s)`` in unscaled target
    units (the affine change of variables contributes ``-log spread``).
    """
    layout = spec.layout()
    _check_codes(codes, layout.capacity)
    center, spread = unscale
    if spread <= 0:
        spread = 1.0
        center = 0.0
    mu, sigma, nu = _per_draw_params(spec, layout, draws)
    y_scaled = (np.asarray(y_raw, dtype=np.float64) - center) / spread
    mu_r = mu[:, codes].T
    sigma_r = sigma[:, codes].T
    y_col = y_scaled[:, None]
    if spec.is_student_t:
        out = logpdf_student_t(y_col, mu_r, sigma_r, nu[:, codes].T)
    else:
        out = logpdf_normal(y_col, mu_r, sigma_r)
    return out - np.log(spread)


@dataclass(frozen=True)
class FatTailRow:
    """Posterior summary of the composed degrees of freedom for one category."""

    code: int
    mean: float
    sd: float
    q05: float
    q50: float
    q95: float


def fat_tail_report(
    draws: np.ndarray,
    spec: ModelSpec,
    categories: Sequence[int] | None = None,
) -> list[FatTailRow]:
    """Per-category posterior of the effective degrees of freedom.

    Summaries are over ``base_df + |df_effect[c]|`` across draws. The priors
    on degrees of freedom are asymmetric by design, so percentile intervals
    here are not highest-density intervals; treat them as descriptive spread,
    not decision thresholds.
    """
    if not spec.is_student_t:
        raise UnsupportedModelError(
            "fat-tail report requires the student_t likelihood"
        )
    layout = spec.layout()
    if categories is None:
        categories = range(layout.capacity)
    base_df = np.exp(draws[:, layout.base_log_df])
    z = draws[:, layout.z["df"]]
    lam = np.exp(draws[:, layout.loglam["df"]])
    tau = np.exp(draws[:, layout.logtau["df"]])[:, None]
    eff = np.abs(z * lam * tau)
    rows = []
    for code in categories:
        nu_draws = base_df + eff[:, code]
        q05, q50, q95 = np.percentile(nu_draws, [5.0, 50.0, 95.0])
        rows.append(
            FatTailRow(
                code=int(code),
                mean=float(nu_draws.mean()),
                sd=float(nu_draws.std(ddof=1)) if nu_draws.size > 1 else 0.0,
                q05=float(q05),
                q50=float(q50),
                q95=float(q95),
            )
        )
    return rows
