"""HMC/NUTS sampler with warmup adaptation and an online mini-batch driver.

The transition kernel builds a trajectory by multiplicative doubling with the
no-U-turn termination criterion and multinomial sampling of the proposal
along the trajectory. Warmup adapts the step size by Nesterov dual averaging
toward a target acceptance rate and a diagonal inverse mass matrix from the
running variance of positions over doubling windows. ``run_online`` chains
mini-batches: it predicts with the carried posterior before fitting each new
batch (prequential ordering), re-adapts for a configurable number of extra
warmup steps, then samples, carrying the final state forward.

Everything downstream of the log-density uses only *differences* of
log-density values, so adding a constant to the target leaves seeded
trajectories bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator

import numpy as np

from .diff_core import DensityGraph
from .distributions import RngState, make_rng

__all__ = [
    "SamplerConfig",
    "SamplerState",
    "SampleChain",
    "SamplerDiagnostics",
    "PosteriorBatch",
    "SamplerError",
    "InitializationError",
    "PersistentDivergenceError",
    "warmup",
    "sample",
    "run_online",
    "effective_sample_size",
]


class SamplerError(RuntimeError):
    pass


class InitializationError(SamplerError):
    """No finite starting point could be found for the target."""


class PersistentDivergenceError(SamplerError):
    """More than half of a warmup run diverged; carries the resulting state."""

    def __init__(self, divergence_count: int, steps: int, state: "SamplerState"):
        super().__init__(
            f"{divergence_count} of {steps} warmup steps diverged; "
            "the target geometry is likely pathological at this step size"
        )
        self.divergence_count = divergence_count
        self.steps = steps
        self.state = state


@dataclass(frozen=True)
class SamplerConfig:
    """Sampler schedule and tuning knobs.

    Defaults follow the reference schedule this package ships with: 500
    posterior draws after 1500 first-batch warmup steps, with 500 extra
    warmup steps before fitting each later mini-batch. A common rule of thumb
    sizes extra warmup at three times the number of samples; it is exposed as
    :meth:`heuristic_extra_warmup` and never applied silently.
    """

    num_samples: int = 500
    num_warmup: int = 1500
    extra_warmup: int = 500
    max_tree_depth: int = 10
    target_accept: float = 0.8
    step_size_init: float | None = None  # None -> search for a reasonable value
    divergence_threshold: float = 1000.0

    def __post_init__(self):
        if self.num_samples < 1 or self.num_warmup < 1 or self.extra_warmup < 0:
            raise ValueError("schedule fields must be positive (extra_warmup >= 0)")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be >= 1")

    @staticmethod
    def heuristic_extra_warmup(num_samples: int) -> int:
        """Rule-of-thumb re-adaptation budget: three times the sample count."""
        return 3 * num_samples


@dataclass
class DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance."""

    mu: float
    log_step: float
    log_step_avg: float
    target: float
    h_bar: float = 0.0
    count: int = 0
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75

    @classmethod
    def start(cls, step_size: float, target: float) -> "DualAveraging":
        log_step = math.log(step_size)
        return cls(
            mu=math.log(10.0 * step_size),
            log_step=log_step,
            log_step_avg=log_step,
            target=target,
        )

    def update(self, accept_prob: float) -> None:
        self.count += 1
        frac = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_prob)
        self.log_step = self.mu - math.sqrt(self.count) / self.gamma * self.h_bar
        eta = self.count ** (-self.kappa)
        self.log_step_avg = eta * self.log_step + (1.0 - eta) * self.log_step_avg

    @property
    def step_size(self) -> float:
        return math.exp(self.log_step)

    @property
    def averaged_step_size(self) -> float:
        return math.exp(self.log_step_avg)


class Welford:
    """Running mean/variance accumulator over parameter vectors."""

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros(dim)

    def update(self, x: np.ndarray) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (x - self.mean)

    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.ones_like(self.mean)
        return self._m2 / (self.count - 1)

    def regularized_variance(self) -> np.ndarray:
        # shrink toward a small diagonal, as in Stan's windowed adaptation
        n = self.count
        return (n / (n + 5.0)) * self.variance() + 1e-3 * (5.0 / (n + 5.0))


@dataclass
class SamplerState:
    """Carryover object for the online workflow.

    Holds the chain position with its cached (logp, grad) under the most
    recently bound batch, the adapted step size and diagonal inverse mass
    matrix, the dual-averaging and variance accumulators of the last warmup
    phase, and the generator that owns this chain's randomness.
    """

    position: np.ndarray
    logp: float
    grad: np.ndarray
    step_size: float
    inverse_mass_diag: np.ndarray
    rng: RngState
    dual_avg: DualAveraging | None = None
    mass_accum: Welford | None = None
    divergence_count: int = 0
    n_transitions: int = 0


@dataclass
class SampleChain:
    """s posterior draws with per-draw transition statistics."""

    draws: np.ndarray  # (s, dimension)
    accept_probs: np.ndarray
    tree_depths: np.ndarray
    n_leapfrogs: np.ndarray
    divergences: int


@dataclass
class SamplerDiagnostics:
    """Per-batch sampler health record for the evaluation sink."""

    batch_index: int
    step_size: float
    mean_accept: float
    mean_tree_depth: float
    max_tree_depth: int
    n_leapfrog: int
    warmup_divergences: int
    sample_divergences: int
    warmup_failed: bool = False

    def to_record(self) -> dict:
        return {
            "batch_index": self.batch_index,
            "step_size": self.step_size,
            "mean_accept": self.mean_accept,
            "mean_tree_depth": self.mean_tree_depth,
            "max_tree_depth": self.max_tree_depth,
            "n_leapfrog": self.n_leapfrog,
            "warmup_divergences": self.warmup_divergences,
            "sample_divergences": self.sample_divergences,
            "warmup_failed": int(self.warmup_failed),
        }


@dataclass
class PosteriorBatch:
    """Result of one mini-batch: fitted chain plus predictions made for it."""

    batch_index: int
    chain: SampleChain
    predictions: Any
    diagnostics: SamplerDiagnostics

    @property
    def draws(self) -> np.ndarray:
        return self.chain.draws


# ---------------------------------------------------------------------------
# transition kernel
# ---------------------------------------------------------------------------


class _Tree:
    """State of a doubling trajectory: endpoints, momentum sum, proposal.

    ``log_w`` is the log of the total multinomial weight of the tree's
    leaves, each leaf weighted by exp(H - H0). Merging follows the biased
    progressive scheme: root merges favour the fresh subtree
    (p = min(1, w_new / w_old)), inner merges draw proportionally.
    ``sharp_*`` caches the mass-matrix-weighted endpoint momenta the U-turn
    criterion needs.
    """

    __slots__ = (
        "theta_minus", "r_minus", "grad_minus", "sharp_minus",
        "theta_plus", "r_plus", "grad_plus", "sharp_plus",
        "r_sum", "theta", "logp", "grad",
        "log_w", "alpha_sum", "n_alpha", "stop", "divergent",
    )

    def __init__(self, theta, r, logp, grad, sharp, log_w, alpha_sum, n_alpha,
                 stop, divergent):
        self.theta_minus = theta
        self.theta_plus = theta
        self.r_minus = r
        self.r_plus = r
        self.grad_minus = grad
        self.grad_plus = grad
        self.sharp_minus = sharp
        self.sharp_plus = sharp
        self.r_sum = r
        self.theta = theta
        self.logp = logp
        self.grad = grad
        self.log_w = log_w
        self.alpha_sum = alpha_sum
        self.n_alpha = n_alpha
        self.stop = stop
        self.divergent = divergent

    def merge(self, other: "_Tree", direction: int, root: bool, rng):
        r_sum_old = self.r_sum
        if direction == -1:
            self.theta_minus = other.theta_minus
            r_self_inner = self.r_minus  # seam momentum of the old tree
            sharp_self_inner = self.sharp_minus
            r_other_inner = other.r_plus
            sharp_other_inner = other.sharp_plus
            self.r_minus = other.r_minus
            self.grad_minus = other.grad_minus
            self.sharp_minus = other.sharp_minus
        else:
            self.theta_plus = other.theta_plus
            r_self_inner = self.r_plus
            sharp_self_inner = self.sharp_plus
            r_other_inner = other.r_minus
            sharp_other_inner = other.sharp_minus
            self.r_plus = other.r_plus
            self.grad_plus = other.grad_plus
            self.sharp_plus = other.sharp_plus

        self.alpha_sum += other.alpha_sum
        self.n_alpha += other.n_alpha
        self.divergent |= other.divergent
        self.stop |= other.stop
        if self.stop:
            return

        if not root:
            self.log_w = np.logaddexp(self.log_w, other.log_w)
        # select the new subtree's proposal with the scheme-appropriate odds
        log_p = other.log_w - self.log_w
        if log_p >= 0.0 or rng.uniform() < math.exp(log_p):
            self.theta = other.theta
            self.logp = other.logp
            self.grad = other.grad
        if root:
            self.log_w = np.logaddexp(self.log_w, other.log_w)

        self.r_sum = r_sum_old + other.r_sum

        # generalized U-turn check over the merged tree
        if (
            np.dot(self.r_sum, self.sharp_minus) <= 0
            or np.dot(self.r_sum, self.sharp_plus) <= 0
        ):
            self.stop = True
            return

        # and across the seam: each subtree's momentum sum extended by the
        # boundary momentum of the other, paired with its own endpoints
        if direction == -1:
            ext_left = other.r_sum + r_self_inner
            sharp_left_beg, sharp_right_beg = self.sharp_minus, sharp_self_inner
            ext_right = r_sum_old + r_other_inner
            sharp_left_end, sharp_right_end = sharp_other_inner, self.sharp_plus
        else:
            ext_left = r_sum_old + r_other_inner
            sharp_left_beg, sharp_right_beg = self.sharp_minus, sharp_other_inner
            ext_right = other.r_sum + r_self_inner
            sharp_left_end, sharp_right_end = sharp_self_inner, self.sharp_plus
        if (
            np.dot(ext_left, sharp_left_beg) <= 0
            or np.dot(ext_left, sharp_right_beg) <= 0
            or np.dot(ext_right, sharp_left_end) <= 0
            or np.dot(ext_right, sharp_right_end) <= 0
        ):
            self.stop = True


def _leaf(graph, batch, theta, r, grad, eps, eps_inv_mass, inv_mass, h0,
          div_threshold, counter):
    """One leapfrog step wrapped as a depth-0 tree."""
    r_half = r + (0.5 * eps) * grad
    theta1 = theta + eps_inv_mass * r_half
    logp1, grad1 = graph.evaluate(theta1, batch)
    r1 = r_half + (0.5 * eps) * grad1
    counter[0] += 1
    sharp1 = inv_mass * r1
    h1 = logp1 - 0.5 * float(np.dot(r1, sharp1))
    log_w = h1 - h0
    if not math.isfinite(log_w):
        log_w = -np.inf
    divergent = -log_w > div_threshold
    alpha = math.exp(min(0.0, log_w))
    return _Tree(
        theta1, r1, logp1, grad1, sharp1,
        log_w=log_w, alpha_sum=alpha, n_alpha=1,
        stop=divergent, divergent=divergent,
    )


def _build_tree(graph, batch, tree, depth, direction, eps, eps_inv_mass,
                inv_mass, h0, rng, div_threshold, counter):
    if depth == 0:
        if direction == -1:
            theta, r, grad = tree.theta_minus, tree.r_minus, tree.grad_minus
        else:
            theta, r, grad = tree.theta_plus, tree.r_plus, tree.grad_plus
        return _leaf(graph, batch, theta, r, grad, direction * eps,
                     direction * eps_inv_mass, inv_mass, h0, div_threshold,
                     counter)
    inner = _build_tree(graph, batch, tree, depth - 1, direction, eps,
                        eps_inv_mass, inv_mass, h0, rng, div_threshold, counter)
    if not inner.stop:
        outer = _build_tree(graph, batch, inner, depth - 1, direction, eps,
                            eps_inv_mass, inv_mass, h0, rng, div_threshold,
                            counter)
        inner.merge(outer, direction, root=False, rng=rng)
    return inner


def _transition(graph, batch, theta, logp, grad, eps, inv_mass, rng,
                max_depth, div_threshold):
    """One NUTS update. Returns (theta, logp, grad, accept, n_leapfrog, depth,
    divergent)."""
    dim = theta.shape[0]
    r0 = rng.standard_normal(dim) / np.sqrt(inv_mass)
    sharp0 = inv_mass * r0
    h0 = logp - 0.5 * float(np.dot(r0, sharp0))
    tree = _Tree(theta, r0, logp, grad, sharp0, log_w=0.0, alpha_sum=0.0,
                 n_alpha=0, stop=False, divergent=False)
    eps_inv_mass = eps * inv_mass
    counter = [0]
    depth = 0
    while depth < max_depth and not tree.stop:
        direction = 1 if rng.uniform() < 0.5 else -1
        sub = _build_tree(graph, batch, tree, depth, direction, eps,
                          eps_inv_mass, inv_mass, h0, rng, div_threshold,
                          counter)
        tree.merge(sub, direction, root=True, rng=rng)
        depth += 1
    accept = tree.alpha_sum / tree.n_alpha if tree.n_alpha else 0.0
    return (tree.theta, tree.logp, tree.grad, accept, counter[0], depth,
            tree.divergent)


def _find_reasonable_step_size(graph, batch, theta, logp, grad, inv_mass, rng):
    """Double/halve the step size until one-step acceptance crosses 1/2."""
    eps = 1.0
    dim = theta.shape[0]
    r = rng.standard_normal(dim) / np.sqrt(inv_mass)
    h0 = logp - 0.5 * float(np.dot(r, inv_mass * r))

    def energy_diff(step):
        r_half = r + (0.5 * step) * grad
        theta1 = theta + step * inv_mass * r_half
        logp1, grad1 = graph.evaluate(theta1, batch)
        r1 = r_half + (0.5 * step) * grad1
        h1 = logp1 - 0.5 * float(np.dot(r1, inv_mass * r1))
        diff = h1 - h0
        return diff if math.isfinite(diff) else -np.inf

    diff = energy_diff(eps)
    direction = 1.0 if diff > math.log(0.5) else -1.0
    for _ in range(60):
        if direction * diff <= -direction * math.log(2.0):
            break
        eps *= 2.0 ** direction
        if not 1e-10 < eps < 1e3:
            break
        diff = energy_diff(eps)
    return min(max(eps, 1e-10), 1e3)


# ---------------------------------------------------------------------------
# warmup / sampling
# ---------------------------------------------------------------------------


def _adaptation_schedule(steps: int) -> list[int]:
    """1-based step indices at which the mass matrix updates (Stan-style
    windows: fast start, doubling slow windows, fast tail)."""
    if steps < 20:
        return []
    init_buf, term_buf, window = 75, 50, 25
    if steps < init_buf + window + term_buf:
        scale = steps / (init_buf + window + term_buf)
        init_buf = int(init_buf * scale)
        term_buf = int(term_buf * scale)
        window = steps - init_buf - term_buf
    ends = []
    start = init_buf
    while True:
        end = start + window
        if end + 2 * window + term_buf > steps:
            ends.append(steps - term_buf)
            return ends
        ends.append(end)
        start = end
        window *= 2


def _init_position(graph, batch, rng, attempts: int = 100):
    for _ in range(attempts):
        theta = rng.uniform(-1.0, 1.0, graph.dimension)
        logp, grad = graph.evaluate(theta, batch)
        if np.isfinite(logp):
            return theta, logp, grad
    raise InitializationError(
        "could not find a starting point with finite log-density"
    )


def warmup(
    graph: DensityGraph,
    batch,
    config: SamplerConfig,
    state: SamplerState | None = None,
    steps: int | None = None,
    rng: RngState | None = None,
    accept_trace: list | None = None,
) -> SamplerState:
    """Adapt step size and mass matrix for ``steps`` transitions.

    With ``state=None`` a fresh chain is initialized (random position, unit
    mass, step size from config or a doubling search). With a carried state,
    re-adaptation restarts dual averaging from the carried step size and the
    variance accumulator from the carried mass matrix, which is what makes
    the online workflow recover from shifted posteriors. ``steps=0`` with a
    carried state is a no-op.

    Raises :class:`PersistentDivergenceError` when more than half the steps
    diverge; the exception carries the adapted state so callers that must
    not abort can keep going.
    """
    if state is not None and steps == 0:
        return state
    if steps is None:
        steps = config.num_warmup if state is None else config.extra_warmup

    if state is None:
        rng = rng if rng is not None else make_rng(0)
        theta, logp, grad = _init_position(graph, batch, rng)
        inv_mass = np.ones(graph.dimension)
        if config.step_size_init is not None:
            eps = config.step_size_init
        else:
            eps = _find_reasonable_step_size(
                graph, batch, theta, logp, grad, inv_mass, rng
            )
    else:
        rng = state.rng
        theta = state.position
        inv_mass = state.inverse_mass_diag
        eps = state.step_size
        logp, grad = graph.evaluate(theta, batch)
        if not np.isfinite(logp):
            # carried position is outside the new batch's support: restart
            theta, logp, grad = _init_position(graph, batch, rng)

    da = DualAveraging.start(eps, config.target_accept)
    accum = Welford(graph.dimension)
    mass_updates = set(_adaptation_schedule(steps))
    divergences = 0

    for t in range(1, steps + 1):
        theta, logp, grad, accept, _, _, divergent = _transition(
            graph, batch, theta, logp, grad, da.step_size, inv_mass, rng,
            config.max_tree_depth, config.divergence_threshold,
        )
        divergences += int(divergent)
        da.update(accept)
        accum.update(theta)
        if accept_trace is not None:
            accept_trace.append(accept)
        if t in mass_updates:
            if accum.count >= 5:
                inv_mass = accum.regularized_variance()
            accum = Welford(graph.dimension)
            da = DualAveraging.start(da.step_size, config.target_accept)

    new_state = SamplerState(
        position=theta,
        logp=logp,
        grad=grad,
        step_size=da.averaged_step_size,
        inverse_mass_diag=inv_mass,
        rng=rng,
        dual_avg=da,
        mass_accum=accum,
        divergence_count=(state.divergence_count if state else 0) + divergences,
        n_transitions=(state.n_transitions if state else 0) + steps,
    )
    if steps >= 20 and divergences > steps / 2:
        raise PersistentDivergenceError(divergences, steps, new_state)
    return new_state


def sample(
    graph: DensityGraph,
    batch,
    config: SamplerConfig,
    state: SamplerState,
) -> tuple[SampleChain, SamplerState]:
    """Draw ``config.num_samples`` transitions with adaptation frozen."""
    if state.step_size <= 0:
        raise SamplerError("state has no adapted step size; run warmup first")
    s = config.num_samples
    dim = graph.dimension
    theta = state.position
    logp, grad = graph.evaluate(theta, batch)
    eps = state.step_size
    inv_mass = state.inverse_mass_diag
    rng = state.rng

    draws = np.empty((s, dim))
    accepts = np.empty(s)
    depths = np.empty(s, dtype=np.int64)
    leapfrogs = np.empty(s, dtype=np.int64)
    divergences = 0
    for i in range(s):
        theta, logp, grad, accept, n_leap, depth, divergent = _transition(
            graph, batch, theta, logp, grad, eps, inv_mass, rng,
            config.max_tree_depth, config.divergence_threshold,
        )
        draws[i] = theta
        accepts[i] = accept
        depths[i] = depth
        leapfrogs[i] = n_leap
        divergences += int(divergent)

    chain = SampleChain(
        draws=draws,
        accept_probs=accepts,
        tree_depths=depths,
        n_leapfrogs=leapfrogs,
        divergences=divergences,
    )
    new_state = SamplerState(
        position=theta,
        logp=logp,
        grad=grad,
        step_size=eps,
        inverse_mass_diag=inv_mass,
        rng=rng,
        dual_avg=state.dual_avg,
        mass_accum=state.mass_accum,
        divergence_count=state.divergence_count + divergences,
        n_transitions=state.n_transitions + s,
    )
    return chain, new_state


def run_online(
    graph: DensityGraph,
    stream: Iterable,
    config: SamplerConfig,
    rng: RngState | None = None,
    predict: Callable[[int, Any, np.ndarray], Any] | None = None,
) -> Iterator[tuple[PosteriorBatch, SamplerState]]:
    """Online mini-batch workflow with state carryover.

    For the first batch: full warmup, then sampling, then predictions from
    the batch's own draws (a cold start is unavoidably in-sample). For every
    later batch, strictly in order: ``predict`` is called with the *carried*
    draws before the batch influences any sampler state, then extra warmup
    re-adapts from the carried state, then sampling. A batch is never
    aborted: a persistently divergent re-warmup is recorded in diagnostics
    and its state used as-is.
    """
    rng = rng if rng is not None else make_rng(0)
    state: SamplerState | None = None
    prev_draws: np.ndarray | None = None
    for index, batch in enumerate(stream):
        warmup_failed = False
        if state is None:
            before = 0
            try:
                state = warmup(graph, batch, config, None, config.num_warmup, rng)
            except PersistentDivergenceError as err:
                state = err.state
                warmup_failed = True
            warm_div = state.divergence_count - before
            chain, state = sample(graph, batch, config, state)
            predictions = predict(index, batch, chain.draws) if predict else None
        else:
            predictions = predict(index, batch, prev_draws) if predict else None
            before = state.divergence_count
            try:
                state = warmup(graph, batch, config, state, config.extra_warmup)
            except PersistentDivergenceError as err:
                state = err.state
                warmup_failed = True
            warm_div = state.divergence_count - before
            chain, state = sample(graph, batch, config, state)

        diagnostics = SamplerDiagnostics(
            batch_index=index,
            step_size=state.step_size,
            mean_accept=float(chain.accept_probs.mean()),
            mean_tree_depth=float(chain.tree_depths.mean()),
            max_tree_depth=int(chain.tree_depths.max()),
            n_leapfrog=int(chain.n_leapfrogs.sum()),
            warmup_divergences=warm_div,
            sample_divergences=chain.divergences,
            warmup_failed=warmup_failed,
        )
        prev_draws = chain.draws
        yield PosteriorBatch(index, chain, predictions, diagnostics), state


def effective_sample_size(x: np.ndarray) -> float:
    """ESS of a scalar chain via the initial positive sequence estimator."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 4:
        return float(n)
    centered = x - x.mean()
    acov = np.correlate(centered, centered, mode="full")[n - 1:] / n
    if acov[0] <= 0:
        return float(n)
    rho = acov / acov[0]
    total = 0.0
    for k in range(1, n - 2, 2):
        pair = rho[k] + rho[k + 1]
        if pair < 0:
            break
        total += pair
    return float(n / (1.0 + 2.0 * total))
