"""Optional compiled kernels for the model log-density and gradient.

The sampler spends nearly all its time in gradient evaluations over the
current mini-batch, so the whole evaluation (priors, row likelihood, chain
rule) is compiled when numba is available. The vectorized numpy path in
:mod:`ltvstream.models` remains the reference implementation and fallback;
equivalence of the two is covered by tests (summation order may differ in
the last ulp).

The kernels must never raise: out-of-range intermediate values are allowed
to propagate as inf/nan and are normalized to a rejected (-inf) evaluation
by the caller.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


_LOG_2PI = math.log(2.0 * math.pi)
_LOG_2_OVER_PI = math.log(2.0 / math.pi)
_LOG_PI = math.log(math.pi)


@njit(cache=True)
def _digamma(x):
    """Digamma for x > 0: upward recurrence then asymptotic series.

    Matches scipy.special.digamma to ~1e-13 on the positive axis, which is
    well below the gradient tolerances used anywhere in the package.
    """
    result = 0.0
    while x < 6.0:
        result -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    # Bernoulli series: log x - 1/(2x) - sum B_2k / (2k x^{2k})
    series = inv2 * (
        1.0 / 12.0
        - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0)))
    )
    return result + math.log(x) - 0.5 * inv - series


@njit(cache=True)
def _log1p_exp(x):
    """log(1 + exp(x)) without overflow."""
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True)
def _half_cauchy_block(theta, grad, start, count, log_scale):
    """Sum of transformed Half-Cauchy log-priors over a block, with grads."""
    total = 0.0
    for i in range(start, start + count):
        a = theta[i] - log_scale
        total += _LOG_2_OVER_PI - log_scale + theta[i] - _log1p_exp(2.0 * a)
        grad[i] = -math.tanh(a)
    return total


@njit(cache=True)
def _normal_block(theta, grad, start, count):
    """Standard normal log-prior over a block, with grads."""
    total = -0.5 * count * _LOG_2PI
    for i in range(start, start + count):
        total -= 0.5 * theta[i] * theta[i]
        grad[i] = -theta[i]
    return total


@njit(cache=True)
def model_eval(
    theta,
    y,
    codes,
    counts,
    capacity,
    is_student_t,
    per_category_sigma,
    base_mu_scale,
    base_sigma_scale,
    df_prior_scale,
    lambda_scale,
    tau0,
    grad,
):
    """Full unnormalized log posterior and gradient for both model variants.

    Parameter layout mirrors ParamLayout.build: bases first, then per effect
    family (mu, optional sigma, df for Student-t) a block of z residuals, a
    block of log local scales, and one log global scale.
    """
    c = capacity
    n_base = 3 if is_student_t else 2
    n_fam = 1 + (1 if per_category_sigma else 0) + (1 if is_student_t else 0)
    per_fam = 2 * c + 1

    base_mu = theta[0]
    base_sigma = math.exp(theta[1])
    base_df = math.exp(theta[2]) if is_student_t else 0.0

    # priors on bases
    logp = (
        -0.5 * (base_mu / base_mu_scale) ** 2
        - math.log(base_mu_scale)
        - 0.5 * _LOG_2PI
    )
    grad[0] = -base_mu / (base_mu_scale * base_mu_scale)
    logp += _half_cauchy_block(theta, grad, 1, 1, math.log(base_sigma_scale))
    if is_student_t:
        logp += _half_cauchy_block(theta, grad, 2, 1, math.log(df_prior_scale))

    # priors on effect families
    log_lambda_scale = math.log(lambda_scale)
    log_tau0 = math.log(tau0)
    for f in range(n_fam):
        off = n_base + f * per_fam
        logp += _normal_block(theta, grad, off, c)
        logp += _half_cauchy_block(theta, grad, off + c, c, log_lambda_scale)
        logp += _half_cauchy_block(theta, grad, off + 2 * c, 1, log_tau0)

    # per-category likelihood parameters
    mu_c = np.empty(c)
    inv_sigma_c = np.empty(c)
    nu_c = np.empty(c)
    sig_eff = np.empty(c)
    df_eff = np.empty(c)

    off_mu = n_base
    tau_mu = math.exp(theta[off_mu + 2 * c])
    off_sig = off_mu + per_fam if per_category_sigma else -1
    tau_sig = math.exp(theta[off_sig + 2 * c]) if per_category_sigma else 0.0
    off_df = n_base + (2 if per_category_sigma else 1) * per_fam if is_student_t else -1
    tau_df = math.exp(theta[off_df + 2 * c]) if is_student_t else 0.0

    for j in range(c):
        mu_c[j] = base_mu + theta[off_mu + j] * math.exp(theta[off_mu + c + j]) * tau_mu
        if per_category_sigma:
            sig_eff[j] = theta[off_sig + j] * math.exp(theta[off_sig + c + j]) * tau_sig
            inv_sigma_c[j] = 1.0 / (base_sigma + abs(sig_eff[j]))
        else:
            sig_eff[j] = 0.0
            inv_sigma_c[j] = 1.0 / base_sigma
        if is_student_t:
            df_eff[j] = theta[off_df + j] * math.exp(theta[off_df + c + j]) * tau_df
            nu_c[j] = base_df + abs(df_eff[j])
        else:
            df_eff[j] = 0.0
            nu_c[j] = 0.0

    # per-category normalization constants and likelihood row terms
    dmu_c = np.zeros(c)
    dsigma_c = np.zeros(c)
    dnu_c = np.zeros(c)
    if is_student_t:
        dig_c = np.empty(c)
        for j in range(c):
            if counts[j] > 0.0:
                nu = nu_c[j]
                logp += counts[j] * (
                    math.lgamma((nu + 1.0) * 0.5)
                    - math.lgamma(nu * 0.5)
                    - 0.5 * (_LOG_PI + math.log(nu))
                    + math.log(inv_sigma_c[j])
                )
                dig_c[j] = (
                    0.5 * (_digamma((nu + 1.0) * 0.5) - _digamma(nu * 0.5)) - 0.5 / nu
                )
            else:
                dig_c[j] = 0.0
        row_total = 0.0
        for i in range(y.shape[0]):
            k = codes[i]
            inv_s = inv_sigma_c[k]
            nu = nu_c[k]
            resid = (y[i] - mu_c[k]) * inv_s
            r2 = resid * resid
            log_term = math.log1p(r2 / nu)
            row_total += (nu + 1.0) * log_term
            a = (nu + 1.0) / (nu + r2)
            ar2 = a * r2
            dmu_c[k] += a * resid * inv_s
            dsigma_c[k] += (ar2 - 1.0) * inv_s
            dnu_c[k] += dig_c[k] - 0.5 * log_term + ar2 / (2.0 * nu)
        logp -= 0.5 * row_total
    else:
        for j in range(c):
            if counts[j] > 0.0:
                logp += counts[j] * (math.log(inv_sigma_c[j]) - 0.5 * _LOG_2PI)
        row_total = 0.0
        for i in range(y.shape[0]):
            k = codes[i]
            inv_s = inv_sigma_c[k]
            resid = (y[i] - mu_c[k]) * inv_s
            r2 = resid * resid
            row_total += r2
            dmu_c[k] += resid * inv_s
            dsigma_c[k] += (r2 - 1.0) * inv_s
        logp -= 0.5 * row_total

    # chain rule into the unconstrained vector
    sum_dmu = 0.0
    sum_dsigma = 0.0
    sum_dnu = 0.0
    for j in range(c):
        sum_dmu += dmu_c[j]
        sum_dsigma += dsigma_c[j]
        sum_dnu += dnu_c[j]
    grad[0] += sum_dmu
    grad[1] += sum_dsigma * base_sigma
    if is_student_t:
        grad[2] += sum_dnu * base_df

    # mu family (signed effect)
    tau_grad = 0.0
    for j in range(c):
        lam = math.exp(theta[off_mu + c + j])
        eff = theta[off_mu + j] * lam * tau_mu
        grad[off_mu + j] += dmu_c[j] * lam * tau_mu
        grad[off_mu + c + j] += dmu_c[j] * eff
        tau_grad += dmu_c[j] * eff
    grad[off_mu + 2 * c] += tau_grad

    if per_category_sigma:
        tau_grad = 0.0
        for j in range(c):
            lam = math.exp(theta[off_sig + c + j])
            g_eff = dsigma_c[j] * _sign(sig_eff[j])
            grad[off_sig + j] += g_eff * lam * tau_sig
            grad[off_sig + c + j] += g_eff * sig_eff[j]
            tau_grad += g_eff * sig_eff[j]
        grad[off_sig + 2 * c] += tau_grad

    if is_student_t:
        tau_grad = 0.0
        for j in range(c):
            lam = math.exp(theta[off_df + c + j])
            g_eff = dnu_c[j] * _sign(df_eff[j])
            grad[off_df + j] += g_eff * lam * tau_df
            grad[off_df + c + j] += g_eff * df_eff[j]
            tau_grad += g_eff * df_eff[j]
        grad[off_df + 2 * c] += tau_grad

    return logp


@njit(cache=True)
def _sign(x):
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0
