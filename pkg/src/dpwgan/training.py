"""Noisy WGAN training loop.

One outer iteration runs ``n_d`` critic updates followed by one generator
update. Each critic update draws a latent batch and a data batch, forms the
per-example gradients of ``f_w(x_i) - f_w(G(z_i))`` w.r.t. the critic
parameters, perturbs their sum with a single Gaussian draw of per-coordinate
standard deviation ``sigma_n * c_g``, divides by the batch size, applies an
RMSProp ascent step, and clips all critic parameters to ``[-c_p, c_p]``.
Generator updates descend on the unperturbed batch gradient and consume no
privacy budget.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import bounds as _bounds
from .data import RecordMatrix
from .network import (
    GradientSet,
    NetworkSpec,
    ParameterSet,
    RmspropState,
    backward,
    backward_deltas,
    clip_weights,
    forward,
    forward_batch,
    init_params,
    input_gradient,
    rmsprop_step,
)
from .privacy import MomentsLedger

OBJECTIVE_WASSERSTEIN = "wasserstein"
OBJECTIVE_GAN = "gan"

_LOG_EPS = 1e-12  # floor inside log() for the alternative saturating loss


class NonFiniteError(RuntimeError):
    """Training produced NaN/Inf parameters; carries the outer iteration."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite parameters at generator iteration {iteration}")
        self.iteration = iteration


class GradientBoundError(AssertionError):
    """A per-example gradient norm exceeded the analytic bound."""


@dataclass
class TrainConfig:
    """Hyperparameters of one training run.

    Attributes:
        alpha_d / alpha_g: RMSProp learning rates of critic and generator.
        c_p: critic clip constant; must satisfy the hidden-layer precondition.
        m: batch size; M: number of training records (q = m / M).
        n_d: critic iterations per generator iteration; n_g: generator iterations.
        sigma_n: noise scale (0 disables noise and makes the run non-private).
        c_g: per-example gradient bound used to scale the noise.
        latent_dim: dimension of the uniform [-1, 1] prior.
        gen_init_scale: generator weight init half-range (defaults to c_p).
        objective: "wasserstein" (default) or "gan" (saturating log loss;
            no privacy statement is made for it).
        l2_reg: optional weight penalty added to both players' gradients
            before noise; when on, c_g must be enlarged by the caller.
        check_gradient_bound: assert per-example norms <= c_g every batch.
    """

    alpha_d: float
    alpha_g: float
    c_p: float
    m: int
    M: int
    n_d: int
    n_g: int
    sigma_n: float
    c_g: float
    latent_dim: int
    seed: int = 0
    gen_init_scale: float | None = None
    rmsprop_decay: float = 0.9
    rmsprop_eps: float = 1e-8
    log_every: int = 100
    eval_batch: int | None = None
    objective: str = OBJECTIVE_WASSERSTEIN
    l2_reg: float = 0.0
    check_gradient_bound: bool = False

    def __post_init__(self):
        if self.alpha_d <= 0 or self.alpha_g <= 0:
            raise ValueError("learning rates must be positive")
        if self.c_p <= 0:
            raise ValueError("clip constant must be positive")
        if self.m < 1 or self.M < 1:
            raise ValueError("batch size and dataset size must be positive")
        if not 0.0 < self.q <= 1.0:
            raise ValueError("q = m/M must lie in (0, 1]")
        if self.n_d < 1 or self.n_g < 0:
            raise ValueError("n_d must be >= 1 and n_g >= 0")
        if self.sigma_n < 0:
            raise ValueError("noise scale must be nonnegative")
        if self.c_g <= 0:
            raise ValueError("gradient bound must be positive")
        if self.latent_dim < 1:
            raise ValueError("latent dimension must be positive")
        if self.log_every < 1:
            raise ValueError("log cadence must be positive")
        if self.objective not in (OBJECTIVE_WASSERSTEIN, OBJECTIVE_GAN):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.l2_reg < 0:
            raise ValueError("l2 penalty must be nonnegative")

    @property
    def q(self) -> float:
        return self.m / self.M


@dataclass(frozen=True)
class LatentSampler:
    """Uniform prior on [-1, 1]^dim."""

    dim: int

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=(n, self.dim))


@dataclass
class MetricRow:
    generator_iteration: int
    wasserstein_estimate: float
    epsilon_spent: float
    wallclock: float


@dataclass
class MetricLog:
    rows: list[MetricRow] = field(default_factory=list)

    def append(self, row: MetricRow) -> None:
        if self.rows and row.generator_iteration <= self.rows[-1].generator_iteration:
            raise ValueError("generator_iteration must be strictly increasing")
        self.rows.append(row)


class EpochSampler:
    """Uniform batches without replacement, reshuffled every epoch.

    A trailing remainder smaller than the batch size is discarded at the
    reshuffle so q = m/M stays exact for every served batch.
    """

    def __init__(self, n_rows: int, batch_size: int, rng: np.random.Generator):
        if batch_size > n_rows:
            raise ValueError("batch size exceeds dataset size")
        self.n_rows = n_rows
        self.batch_size = batch_size
        self.permutation = rng.permutation(n_rows)
        self.cursor = 0

    def next_batch(self, rng: np.random.Generator) -> np.ndarray:
        if self.cursor + self.batch_size > self.n_rows:
            self.permutation = rng.permutation(self.n_rows)
            self.cursor = 0
        out = self.permutation[self.cursor : self.cursor + self.batch_size]
        self.cursor += self.batch_size
        return out

    def state_dict(self) -> dict:
        return {"permutation": self.permutation, "cursor": self.cursor}

    def load_state_dict(self, state: dict) -> None:
        self.permutation = np.asarray(state["permutation"], dtype=int)
        self.cursor = int(state["cursor"])


@dataclass
class TrainState:
    """Everything that evolves during training (checkpointable)."""

    config: TrainConfig
    disc_spec: NetworkSpec
    gen_spec: NetworkSpec
    disc: ParameterSet
    gen: ParameterSet
    disc_opt: RmspropState
    gen_opt: RmspropState
    ledger: MomentsLedger
    rng: np.random.Generator
    eval_rng: np.random.Generator
    sampler: EpochSampler
    iteration: int = 0
    log: MetricLog = field(default_factory=MetricLog)
    started: float = field(default_factory=time.monotonic)


def _critic_output_grads(objective: str, out_x: np.ndarray, out_y: np.ndarray):
    """Output-side gradient seeds for the real and fake passes.

    Wasserstein: d/df [f(x) - f(y)] -> (+1, -1). The saturating alternative
    ascends log D(x) + log(1 - D(y)), so the seeds are 1/D(x) and -1/(1-D(y)).
    """
    if objective == OBJECTIVE_WASSERSTEIN:
        return np.ones_like(out_x), -np.ones_like(out_y)
    gx = 1.0 / np.maximum(out_x, _LOG_EPS)
    gy = -1.0 / np.maximum(1.0 - out_y, _LOG_EPS)
    return gx, gy


def per_example_critic_grad(
    disc_spec: NetworkSpec,
    disc: ParameterSet,
    gen_spec: NetworkSpec,
    gen: ParameterSet,
    x: np.ndarray,
    z: np.ndarray,
    objective: str = OBJECTIVE_WASSERSTEIN,
) -> GradientSet:
    """Gradient of one example's critic term w.r.t. the critic parameters.

    The generator is treated as a constant: ``z`` is pushed through it to a
    fake sample first.
    """
    fake, _ = forward(gen_spec, gen, z)
    out_x, trace_x = forward(disc_spec, disc, x)
    out_y, trace_y = forward(disc_spec, disc, fake)
    seed_x, seed_y = _critic_output_grads(objective, out_x, out_y)
    gx = backward(disc_spec, disc, trace_x, seed_x)
    gy = backward(disc_spec, disc, trace_y, seed_y)
    combined = GradientSet(
        [a + b for a, b in zip(gx.weight_grads, gy.weight_grads)],
        [a + b for a, b in zip(gx.bias_grads, gy.bias_grads)],
    )
    combined.recompute_norm()
    return combined


def noisy_batch_grad(
    per_example: list[GradientSet],
    sigma_n: float,
    c_g: float,
    rng: np.random.Generator,
) -> GradientSet:
    """(sum of per-example gradients + one Gaussian draw) / m.

    The noise is a single vector with per-coordinate standard deviation
    ``sigma_n * c_g`` added to the summed gradient before the division --
    not per-example noise.
    """
    if not per_example:
        raise ValueError("empty batch")
    m = len(per_example)
    total = GradientSet(
        [sum(g.weight_grads[l] for g in per_example) for l in range(len(per_example[0].weight_grads))],
        [sum(g.bias_grads[l] for g in per_example) for l in range(len(per_example[0].bias_grads))],
    )
    std = sigma_n * c_g
    out_w, out_b = [], []
    for w in total.weight_grads:
        noise = rng.normal(0.0, std, size=w.shape) if std > 0 else 0.0
        out_w.append((w + noise) / m)
    for b in total.bias_grads:
        noise = rng.normal(0.0, std, size=b.shape) if std > 0 else 0.0
        out_b.append((b + noise) / m)
    result = GradientSet(out_w, out_b)
    result.recompute_norm()
    return result


def _batch_critic_grads(
    state: TrainState, xb: np.ndarray, zb: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Summed critic gradients over a batch plus per-example norms.

    Returns (summed weight grads, summed bias grads, per-example norms).
    The per-example weight gradient of layer l is a difference of two rank-1
    matrices, so its squared norm needs only row dot products.
    """
    cfg = state.config
    fake, _ = forward_batch(state.gen_spec, state.gen, zb)
    out_x, trace_x = forward_batch(state.disc_spec, state.disc, xb)
    out_y, trace_y = forward_batch(state.disc_spec, state.disc, fake)
    seed_x, seed_y = _critic_output_grads(cfg.objective, out_x, out_y)
    deltas_x = backward_deltas(state.disc_spec, state.disc, trace_x, seed_x)
    deltas_y = backward_deltas(state.disc_spec, state.disc, trace_y, seed_y)

    sum_w, sum_b = [], []
    norms_sq = np.zeros(xb.shape[0])
    for l in range(state.disc_spec.depth):
        ax, ay = trace_x.post_activations[l], trace_y.post_activations[l]
        dx, dy = deltas_x[l], deltas_y[l]
        sum_w.append(dx.T @ ax + dy.T @ ay)
        sum_b.append(dx.sum(axis=0) + dy.sum(axis=0))
        # ||dx ax^T + dy ay^T||_F^2 per example, via rank-1 structure
        norms_sq += (
            (dx * dx).sum(1) * (ax * ax).sum(1)
            + 2.0 * (dx * dy).sum(1) * (ax * ay).sum(1)
            + (dy * dy).sum(1) * (ay * ay).sum(1)
        )
        norms_sq += ((dx + dy) ** 2).sum(1)  # bias part
    return sum_w, sum_b, np.sqrt(norms_sq)


def critic_iteration(state: TrainState, data: RecordMatrix) -> None:
    """One critic update (Algorithm lines: sample z, sample x, per-example
    grads, noisy mean, RMSProp ascent, clip) plus one accountant step."""
    cfg = state.config
    zb = LatentSampler(cfg.latent_dim).sample(cfg.m, state.rng)
    idx = state.sampler.next_batch(state.rng)
    xb = data.data[idx]

    sum_w, sum_b, per_norms = _batch_critic_grads(state, xb, zb)
    if cfg.check_gradient_bound:
        worst = float(per_norms.max())
        if worst > cfg.c_g * (1.0 + 1e-12):
            raise GradientBoundError(
                f"per-example gradient norm {worst:.6g} exceeds c_g={cfg.c_g:.6g}"
            )
    if cfg.l2_reg > 0.0:
        # ascent objective carries -l2*||w||^2; contribution enters before noise
        sum_w = [g - 2.0 * cfg.l2_reg * cfg.m * w for g, w in zip(sum_w, state.disc.weights)]
        sum_b = [g - 2.0 * cfg.l2_reg * cfg.m * b for g, b in zip(sum_b, state.disc.biases)]

    std = cfg.sigma_n * cfg.c_g
    flat = sum_w + sum_b
    if std > 0.0:
        flat = [g + state.rng.normal(0.0, std, size=g.shape) for g in flat]
    flat = [g / cfg.m for g in flat]
    n_w = len(sum_w)
    mean_grad = GradientSet(flat[:n_w], flat[n_w:])

    state.disc, state.disc_opt = rmsprop_step(
        state.disc, mean_grad, state.disc_opt, cfg.alpha_d, "ascent"
    )
    state.disc = clip_weights(state.disc, cfg.c_p)
    state.ledger.record_step()


def generator_iteration(state: TrainState) -> None:
    """One generator update through the frozen critic; adds no noise and
    records no accountant step."""
    cfg = state.config
    zb = LatentSampler(cfg.latent_dim).sample(cfg.m, state.rng)
    gen_out, gen_trace = forward_batch(state.gen_spec, state.gen, zb)
    disc_out, disc_trace = forward_batch(state.disc_spec, state.disc, gen_out)

    if cfg.objective == OBJECTIVE_WASSERSTEIN:
        seed = np.full_like(disc_out, 1.0 / cfg.m)
    else:
        # saturating loss: generator descends E[log(1 - D(G(z)))]
        seed = -1.0 / np.maximum(1.0 - disc_out, _LOG_EPS) / cfg.m
    disc_deltas = backward_deltas(state.disc_spec, state.disc, disc_trace, seed)
    at_input = input_gradient(state.disc_spec, state.disc, disc_deltas)
    gen_grads = backward(state.gen_spec, state.gen, gen_trace, at_input)

    # negate (line "g_theta <- -grad"), then take the RMSProp descent step
    neg = GradientSet(
        [-g for g in gen_grads.weight_grads], [-g for g in gen_grads.bias_grads]
    )
    if cfg.l2_reg > 0.0:
        neg.weight_grads = [g + 2.0 * cfg.l2_reg * w for g, w in zip(neg.weight_grads, state.gen.weights)]
        neg.bias_grads = [g + 2.0 * cfg.l2_reg * b for g, b in zip(neg.bias_grads, state.gen.biases)]
    state.gen, state.gen_opt = rmsprop_step(
        state.gen, neg, state.gen_opt, cfg.alpha_g, "descent"
    )


def wasserstein_batch_estimate(state: TrainState, data: RecordMatrix) -> float:
    """Mean of f(x_i) - f(G(z_i)) over a fresh noise-free evaluation batch."""
    cfg = state.config
    n = cfg.eval_batch or cfg.m
    idx = state.eval_rng.integers(0, data.n_rows, size=n)
    zb = LatentSampler(cfg.latent_dim).sample(n, state.eval_rng)
    fake, _ = forward_batch(state.gen_spec, state.gen, zb)
    fx, _ = forward_batch(state.disc_spec, state.disc, data.data[idx])
    fy, _ = forward_batch(state.disc_spec, state.disc, fake)
    return float(fx.mean() - fy.mean())


def current_epsilon(state: TrainState, delta: float) -> float:
    """Cumulative ledger epsilon; infinity for noise-free runs."""
    if state.config.sigma_n == 0.0:
        return float("inf")
    if state.ledger.steps_taken == 0:
        return 0.0
    return state.ledger.get_epsilon(delta)


def init_train_state(
    config: TrainConfig,
    data: RecordMatrix,
    disc_spec: NetworkSpec,
    gen_spec: NetworkSpec,
) -> TrainState:
    """Validate the run and build the initial training state.

    Critic weights start uniform in [-c_p, c_p] so the clip invariant holds
    from step 0; generator weights start uniform in [-gen_init_scale,
    gen_init_scale]. The latent prior feeds the generator's input layer and
    the generator's output feeds the critic, so those widths must agree.
    """
    if data.n_rows != config.M:
        raise ValueError(f"config.M={config.M} but data has {data.n_rows} rows")
    if disc_spec.output_width != 1:
        raise ValueError("critic must have scalar output")
    if gen_spec.activations[-1] != "sigmoid":
        raise ValueError("generator output layer must use sigmoid")
    if gen_spec.input_width != config.latent_dim:
        raise ValueError("generator input width must equal latent_dim")
    if gen_spec.output_width != disc_spec.input_width or data.n_cols != disc_spec.input_width:
        raise ValueError("generator output, critic input and data width must agree")
    if config.objective == OBJECTIVE_GAN and disc_spec.activations[-1] != "sigmoid":
        raise ValueError("the saturating objective needs a sigmoid critic output")

    check = _bounds.check_clip_precondition(disc_spec, config.c_p)
    if not check.passed:
        raise ValueError(
            f"c_p={config.c_p} violates the clip precondition at hidden layer "
            f"{check.layer} (limit {check.limit:.6g})"
        )
    try:
        analytic = _bounds.compute_cg(disc_spec, config.c_p, include_biases=True)
    except ValueError:
        analytic = None  # unbounded activations need a data bound; trust c_g
    if analytic is not None and config.c_g < analytic:
        warnings.warn(
            f"configured c_g={config.c_g:.6g} is below the analytic bound "
            f"{analytic:.6g}; the noise may be under-scaled",
            stacklevel=2,
        )

    seeds = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(seeds[0])
    eval_rng = np.random.default_rng(seeds[1])
    disc = init_params(disc_spec, config.c_p, rng)
    gen_scale = config.c_p if config.gen_init_scale is None else config.gen_init_scale
    gen = init_params(gen_spec, gen_scale, rng)
    return TrainState(
        config=config,
        disc_spec=disc_spec,
        gen_spec=gen_spec,
        disc=disc,
        gen=gen,
        disc_opt=RmspropState.zeros_like(disc, config.rmsprop_decay, config.rmsprop_eps),
        gen_opt=RmspropState.zeros_like(gen, config.rmsprop_decay, config.rmsprop_eps),
        ledger=MomentsLedger(q=config.q, sigma_n=config.sigma_n),
        rng=rng,
        eval_rng=eval_rng,
        sampler=EpochSampler(data.n_rows, config.m, rng),
    )


def _check_finite(state: TrainState) -> None:
    for arr in state.disc.flat() + state.gen.flat():
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(state.iteration)


def run_iterations(
    state: TrainState, data: RecordMatrix, n_outer: int, delta_for_log: float = 1e-5
) -> TrainState:
    """Advance the state by ``n_outer`` generator iterations (with their
    inner critic loops), logging at the configured cadence."""
    for _ in range(n_outer):
        for _ in range(state.config.n_d):
            critic_iteration(state, data)
        generator_iteration(state)
        state.iteration += 1
        _check_finite(state)
        if state.iteration % state.config.log_every == 0:
            state.log.append(
                MetricRow(
                    generator_iteration=state.iteration,
                    wasserstein_estimate=wasserstein_batch_estimate(state, data),
                    epsilon_spent=current_epsilon(state, delta_for_log),
                    wallclock=time.monotonic() - state.started,
                )
            )
    return state


def train(
    config: TrainConfig,
    data: RecordMatrix,
    disc_spec: NetworkSpec,
    gen_spec: NetworkSpec,
    delta_for_log: float = 1e-5,
) -> tuple[ParameterSet, MetricLog, TrainState]:
    """Run the full procedure and return (generator parameters, metric log,
    final state)."""
    state = init_train_state(config, data, disc_spec, gen_spec)
    run_iterations(state, data, config.n_g, delta_for_log)
    return state.gen, state.log, state


def generate_samples(
    gen_spec: NetworkSpec,
    gen: ParameterSet,
    n: int,
    rng: np.random.Generator,
    latent_dim: int | None = None,
) -> np.ndarray:
    """Draw ``n`` samples through the generator from fresh latent noise.

    Pure post-processing: reads no accountant state.
    """
    dim = latent_dim or gen_spec.input_width
    if n == 0:
        return np.zeros((0, gen_spec.output_width))
    z = LatentSampler(dim).sample(n, rng)
    out, _ = forward_batch(gen_spec, gen, z)
    return out
