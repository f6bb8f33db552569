"""Scikit-learn style estimator wrapping the training loop.

``DPWGAN`` follows the fit/sample convention of tabular synthesizers: ``fit``
trains the generator pair under the configured privacy budget and ``sample``
draws new records through the fitted generator (pure post-processing, no
additional budget).
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import bounds as _bounds
from .data import RecordMatrix, enforce_norm_bound
from .network import NetworkSpec
from .privacy import calibrate_sigma
from .training import (
    TrainConfig,
    current_epsilon,
    generate_samples,
    train,
)


class DPWGAN(BaseEstimator):
    """Differentially private Wasserstein GAN for tabular records.

    Exactly one of ``epsilon`` (per-inner-loop target, converted to a noise
    scale) or ``sigma_n`` (explicit noise scale; 0 disables privacy) controls
    the noise. The critic clip constant defaults to the largest value allowed
    by the analytic gradient-bound precondition.

    Attributes set by fit:
        generator_params_, discriminator_params_: fitted parameter sets.
        gen_spec_, disc_spec_: network architectures.
        sigma_n_: noise scale actually used.
        epsilon_spent_: cumulative accountant epsilon over all critic steps.
        metric_log_: per-checkpoint Wasserstein estimates and epsilon.
        n_features_in_: record dimension.
    """

    def __init__(
        self,
        epsilon: float = 10.0,
        delta: float = 1e-5,
        sigma_n: float | None = None,
        batch_size: int = 64,
        n_critic: int = 5,
        n_iter: int = 1000,
        clip_const: float | None = None,
        learning_rate_d: float = 1e-2,
        learning_rate_g: float = 3e-4,
        disc_hidden: tuple[int, ...] = (8, 8),
        gen_hidden: tuple[int, ...] = (16, 16),
        disc_activation: str = "sigmoid",
        gen_activation: str = "tanh",
        latent_dim: int = 2,
        gen_init_scale: float | None = 0.2,
        data_bound: float | None = None,
        log_every: int = 100,
        eval_batch: int | None = None,
        l2_reg: float = 0.0,
        random_state: int = 0,
    ):
        self.epsilon = epsilon
        self.delta = delta
        self.sigma_n = sigma_n
        self.batch_size = batch_size
        self.n_critic = n_critic
        self.n_iter = n_iter
        self.clip_const = clip_const
        self.learning_rate_d = learning_rate_d
        self.learning_rate_g = learning_rate_g
        self.disc_hidden = disc_hidden
        self.gen_hidden = gen_hidden
        self.disc_activation = disc_activation
        self.gen_activation = gen_activation
        self.latent_dim = latent_dim
        self.gen_init_scale = gen_init_scale
        self.data_bound = data_bound
        self.log_every = log_every
        self.eval_batch = eval_batch
        self.l2_reg = l2_reg
        self.random_state = random_state

    def _build_specs(self, n_features: int) -> tuple[NetworkSpec, NetworkSpec]:
        disc = NetworkSpec(
            (n_features, *self.disc_hidden, 1),
            tuple([self.disc_activation] * len(self.disc_hidden)) + ("identity",),
        )
        gen = NetworkSpec(
            (self.latent_dim, *self.gen_hidden, n_features),
            tuple([self.gen_activation] * len(self.gen_hidden)) + ("sigmoid",),
        )
        return disc, gen

    def fit(self, X, y=None):
        """Train the generator on records ``X`` (shape (M, d))."""
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        n, d = X.shape
        if X.min() < 0.0 or X.max() > 1.0:
            warnings.warn(
                "records outside [0, 1]; the sigmoid generator cannot span them",
                stacklevel=2,
            )
        disc_spec, gen_spec = self._build_specs(d)

        clip_const = self.clip_const
        if clip_const is None:
            clip_const = min(_bounds.max_clip_constant(disc_spec), 1.0)
        records = RecordMatrix(X)
        if self.data_bound is not None:
            records = enforce_norm_bound(records, self.data_bound)

        q = self.batch_size / n
        sigma_n = self.sigma_n
        if sigma_n is None:
            sigma_n = calibrate_sigma(self.epsilon, self.delta, q, self.n_critic)
        c_g = _bounds.compute_cg(disc_spec, clip_const, include_biases=True)

        config = TrainConfig(
            alpha_d=self.learning_rate_d,
            alpha_g=self.learning_rate_g,
            c_p=clip_const,
            m=self.batch_size,
            M=n,
            n_d=self.n_critic,
            n_g=self.n_iter,
            sigma_n=sigma_n,
            c_g=c_g,
            latent_dim=self.latent_dim,
            seed=self.random_state,
            gen_init_scale=self.gen_init_scale,
            log_every=self.log_every,
            eval_batch=self.eval_batch,
            l2_reg=self.l2_reg,
        )
        gen_params, log, state = train(
            config, records, disc_spec, gen_spec, delta_for_log=self.delta
        )
        self.generator_params_ = gen_params
        self.discriminator_params_ = state.disc
        self.gen_spec_ = gen_spec
        self.disc_spec_ = disc_spec
        self.sigma_n_ = sigma_n
        self.clip_const_ = clip_const
        self.c_g_ = c_g
        self.metric_log_ = log
        self.train_state_ = state
        self.epsilon_spent_ = current_epsilon(state, self.delta)
        self.n_features_in_ = d
        return self

    def sample(
        self,
        n: int,
        random_state: int | None = None,
        binarize_threshold: float | None = None,
    ) -> np.ndarray:
        """Draw ``n`` records through the fitted generator."""
        check_is_fitted(self, "generator_params_")
        seed = self.random_state if random_state is None else random_state
        rng = np.random.default_rng(seed)
        out = generate_samples(self.gen_spec_, self.generator_params_, n, rng)
        if binarize_threshold is not None:
            out = (out >= binarize_threshold).astype(float)
        return out
