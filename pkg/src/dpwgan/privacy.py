"""Privacy accounting for noisy critic training.

The per-step log moment-generating-function bound for a subsampled Gaussian
step with sampling ratio ``q`` and noise scale ``sigma_n`` is
``q^2 * lambda^2 / sigma_n^2``; steps compose additively. Converting the
accumulated moments to an epsilon at a given delta uses the tail bound
``epsilon = min_lambda (alpha(lambda) + log(1/delta)) / lambda``, whose
closed-form optimum is ``2 q sqrt(T log(1/delta)) / sigma_n``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_LAMBDA_GRID = tuple(float(k) for k in range(1, 65))


class SupportViolationError(ValueError):
    """A log-density ratio was evaluated where the reference density is zero."""


class NoNoiseError(ValueError):
    """Privacy was queried for a mechanism that adds no noise."""


def _check_ranges(eps: float | None, delta: float, q: float, n_d: int | None = None):
    if eps is not None and eps <= 0:
        raise ValueError("epsilon must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not 0.0 < q <= 1.0:
        raise ValueError("sampling ratio q must lie in (0, 1]")
    if n_d is not None and n_d < 1:
        raise ValueError("n_d must be a positive integer")


def calibrate_sigma(eps: float, delta: float, q: float, n_d: int) -> float:
    """Noise scale giving (eps, delta)-DP for one inner loop of n_d noisy steps.

    sigma_n = 2 q sqrt(n_d log(1/delta)) / eps
    """
    _check_ranges(eps, delta, q, n_d)
    return 2.0 * q * math.sqrt(n_d * math.log(1.0 / delta)) / eps


def step_log_mgf(q: float, sigma_n: float, lam: float) -> float:
    """Per-step log-MGF bound ``q^2 lam^2 / sigma_n^2`` of the privacy loss."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if q == 0.0:
        return 0.0
    if sigma_n <= 0.0:
        raise NoNoiseError("sigma_n = 0 gives unbounded privacy loss")
    return q * q * lam * lam / (sigma_n * sigma_n)


@dataclass
class PrivacyBudget:
    """Target budget for one inner loop of critic training."""

    epsilon: float
    delta: float
    q: float
    n_d: int

    def __post_init__(self):
        _check_ranges(self.epsilon, self.delta, self.q, self.n_d)

    def warn_if_delta_large(self, dataset_size: int) -> None:
        # delta should shrink faster than any polynomial in the dataset size;
        # 1/M is the usual rule of thumb.
        if self.delta >= 1.0 / dataset_size:
            warnings.warn(
                f"delta={self.delta} is not below 1/M={1.0 / dataset_size:.3g}; "
                "the guarantee is weak",
                stacklevel=2,
            )

    def sigma_n(self) -> float:
        return calibrate_sigma(self.epsilon, self.delta, self.q, self.n_d)


@dataclass
class MomentsLedger:
    """Accumulated per-lambda log-MGF over noisy critic steps.

    Every recorded step adds ``step_log_mgf(q, sigma_n, lam)`` at each grid
    lambda, so after T steps ``alpha(lam) = T * q^2 lam^2 / sigma_n^2``.
    """

    q: float
    sigma_n: float
    steps_taken: int = 0
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ValueError("sampling ratio q must lie in (0, 1]")
        if self.sigma_n < 0:
            raise ValueError("sigma_n must be nonnegative")
        if self.steps_taken < 0:
            raise ValueError("steps_taken must be nonnegative")
        self.lambda_grid = tuple(float(l) for l in self.lambda_grid)
        if any(l <= 0 for l in self.lambda_grid):
            raise ValueError("lambda grid entries must be positive")

    def record_step(self) -> "MomentsLedger":
        """Account one noisy critic step; returns self for chaining."""
        self.steps_taken += 1
        return self

    def alpha(self, lam: float) -> float:
        """Accumulated log-MGF bound at one lambda."""
        return self.steps_taken * step_log_mgf(self.q, self.sigma_n, lam)

    def optimal_lambda(self, delta: float) -> float:
        """Analytic minimizer of the tail bound (may be fractional)."""
        if self.sigma_n == 0.0 or self.steps_taken == 0:
            return 1.0
        return (
            self.sigma_n
            * math.sqrt(math.log(1.0 / delta) / self.steps_taken)
            / self.q
        )

    def get_epsilon(self, delta: float) -> float:
        """Smallest epsilon over the lambda grid for the accumulated moments.

        The grid is augmented with the analytic optimum, so the result
        matches the closed form ``2 q sqrt(T log(1/delta)) / sigma_n``.
        """
        _check_ranges(None, delta, self.q)
        if not self.lambda_grid:
            raise ValueError("lambda grid is empty")
        if self.steps_taken == 0 or self.q == 0.0:
            return 0.0
        if self.sigma_n == 0.0:
            raise NoNoiseError("sigma_n = 0 gives unbounded privacy loss")
        log_inv_delta = math.log(1.0 / delta)
        grid = self.lambda_grid + (self.optimal_lambda(delta),)
        return min((self.alpha(lam) + log_inv_delta) / lam for lam in grid)

    def closed_form_epsilon(self, delta: float) -> float:
        """2 q sqrt(T log(1/delta)) / sigma_n (the unconstrained optimum)."""
        if self.steps_taken == 0:
            return 0.0
        if self.sigma_n == 0.0:
            raise NoNoiseError("sigma_n = 0 gives unbounded privacy loss")
        return 2.0 * self.q * math.sqrt(self.steps_taken * math.log(1.0 / delta)) / self.sigma_n

    def state_dict(self) -> dict:
        return {
            "q": self.q,
            "sigma_n": self.sigma_n,
            "steps_taken": self.steps_taken,
            "lambda_grid": list(self.lambda_grid),
        }

    @staticmethod
    def from_state_dict(state: dict) -> "MomentsLedger":
        return MomentsLedger(
            q=state["q"],
            sigma_n=state["sigma_n"],
            steps_taken=int(state["steps_taken"]),
            lambda_grid=tuple(state["lambda_grid"]),
        )


def privacy_loss(log_p_at_o: float, log_q_at_o: float) -> float:
    """Log-density ratio ``log p(o) - log q(o)`` at one outcome.

    Raises SupportViolationError when either log-density is -inf, since the
    two mechanisms must share support for the loss to be finite.
    """
    if math.isinf(log_q_at_o) and log_q_at_o < 0:
        raise SupportViolationError("reference density is zero at the outcome")
    if math.isinf(log_p_at_o) and log_p_at_o < 0:
        raise SupportViolationError("density is zero at the outcome")
    if not (math.isfinite(log_p_at_o) and math.isfinite(log_q_at_o)):
        raise ValueError("log-densities must be finite")
    return log_p_at_o - log_q_at_o


@dataclass
class AuditResult:
    """Histogram-based empirical privacy estimate for one mechanism pair."""

    max_log_ratio: float
    se_at_max: float
    diverged: bool
    bins_used: int
    bin_edges: np.ndarray = field(repr=False, default=None)


def empirical_dp_audit(
    mechanism,
    data,
    data_prime,
    trials: int,
    bins: int = 40,
    rng: np.random.Generator | None = None,
    min_count: int = 10,
    divergence_count: int = 100,
) -> AuditResult:
    """Estimate the max output log-ratio of a mechanism on neighboring data.

    Runs ``mechanism(data, rng) -> float`` ``trials`` times per dataset,
    histograms the outputs over shared bins, and returns the largest
    absolute log-ratio of empirical bin frequencies. Bins where either side
    has fewer than ``min_count`` hits are excluded from the ratio; a bin
    where one side has at least ``divergence_count`` hits and the other has
    none marks the pair as diverged (a detected privacy violation).

    Args:
        mechanism: callable running one seeded mechanism step.
        data, data_prime: neighboring datasets (differ in one record).
        trials: Monte Carlo runs per dataset; below 1000 a warning is issued.
        bins: number of equal-width histogram bins over the pooled range.
        rng: drives all mechanism randomness.

    Returns:
        AuditResult with the estimate and its binomial standard error.
    """
    if trials < 1000:
        warnings.warn("fewer than 1000 trials gives an unreliable estimate", stacklevel=2)
    if rng is None:
        rng = np.random.default_rng()
    out_a = np.array([float(mechanism(data, rng)) for _ in range(trials)])
    out_b = np.array([float(mechanism(data_prime, rng)) for _ in range(trials)])
    lo = min(out_a.min(), out_b.min())
    hi = max(out_a.max(), out_b.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    count_a, _ = np.histogram(out_a, bins=edges)
    count_b, _ = np.histogram(out_b, bins=edges)

    diverged = bool(
        np.any((count_a >= divergence_count) & (count_b == 0))
        or np.any((count_b >= divergence_count) & (count_a == 0))
    )
    usable = (count_a >= min_count) & (count_b >= min_count)
    max_ratio, se_at_max = 0.0, 0.0
    n = float(trials)
    for ca, cb in zip(count_a[usable], count_b[usable]):
        pa, pb = ca / n, cb / n
        ratio = abs(math.log(pa) - math.log(pb))
        if ratio > max_ratio:
            max_ratio = ratio
            # delta-method SE of log(pa/pb) for independent binomials
            se_at_max = math.sqrt((1.0 - pa) / (pa * n) + (1.0 - pb) / (pb * n))
    return AuditResult(max_ratio, se_at_max, diverged, int(usable.sum()), edges)
