"""Analytic per-example gradient bound for clipped critics, plus an empirical
falsification harness.

The closed form bounds the norm of one example's contribution to the critic
gradient by ``2 * c_p * B_sigma * B_sigma'^2 * sum_k m_k m_{k+1}`` where the
sum runs over consecutive non-input layer pairs. Its validity requires the
clip constant to satisfy ``c_p <= 1 / (m_l * B_sigma'(l))`` at every hidden
layer ``l``, using each hidden layer's own derivative bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import (
    NetworkSpec,
    ParameterSet,
    backward,
    forward,
    init_params,
    leaky_slope,
    LEAKY_PREFIX,
)

# activation -> (output bound, derivative bound); None = unbounded output
_TABLE: dict[str, tuple[float | None, float]] = {
    "sigmoid": (1.0, 0.25),
    "tanh": (1.0, 1.0),
    "relu": (None, 1.0),
    "identity": (None, 1.0),
}


def activation_output_bound(name: str) -> float | None:
    """B_sigma for one activation, or None when unbounded."""
    if name.startswith(LEAKY_PREFIX):
        return None
    return _TABLE[name][0]


def activation_derivative_bound(name: str) -> float:
    """B_sigma' for one activation (finite for every supported kind)."""
    if name.startswith(LEAKY_PREFIX):
        return max(1.0, leaky_slope(name))
    return _TABLE[name][1]


@dataclass(frozen=True)
class ActivationBounds:
    """Aggregate activation bounds for a whole network.

    ``B_sigma`` bounds hidden-layer outputs (None when some hidden activation
    is unbounded), ``B_sigma_prime`` is the max derivative bound across all
    non-input layers.
    """

    B_sigma: float | None
    B_sigma_prime: float

    @staticmethod
    def for_spec(spec: NetworkSpec) -> "ActivationBounds":
        hidden = spec.activations[:-1] or spec.activations
        outs = [activation_output_bound(a) for a in hidden]
        b_sigma = None if any(o is None for o in outs) else max(outs)
        b_prime = max(activation_derivative_bound(a) for a in spec.activations)
        return ActivationBounds(b_sigma, b_prime)


@dataclass(frozen=True)
class DataBound:
    """Maximum Euclidean norm over data records."""

    B_x: float

    def __post_init__(self):
        if self.B_x < 0:
            raise ValueError("data norm bound must be nonnegative")


@dataclass(frozen=True)
class PreconditionResult:
    """Outcome of the clip-constant check; ``layer`` is the first violating
    hidden layer (1-based) when failed."""

    passed: bool
    layer: int | None = None
    limit: float = math.inf


def max_clip_constant(spec: NetworkSpec) -> float:
    """Largest clip constant satisfying the precondition (inf when the
    network has no hidden layers)."""
    caps = [
        1.0 / (width * activation_derivative_bound(spec.activations[l - 1]))
        for l, width in enumerate(spec.hidden_widths(), start=1)
    ]
    return min(caps) if caps else math.inf


def check_clip_precondition(spec: NetworkSpec, c_p: float) -> PreconditionResult:
    """Check ``c_p <= 1 / (m_l * B_sigma'(l))`` at every hidden layer ``l``.

    Each hidden layer is checked against its own activation's derivative
    bound. With no hidden layers the check passes vacuously.
    """
    limit = math.inf
    for l, width in enumerate(spec.hidden_widths(), start=1):
        b_prime = activation_derivative_bound(spec.activations[l - 1])
        cap = 1.0 / (width * b_prime)
        if c_p > cap:
            return PreconditionResult(False, l, cap)
        limit = min(limit, cap)
    return PreconditionResult(True, None, limit)


def effective_output_bound(spec: NetworkSpec, c_p: float, data_bound: DataBound) -> float:
    """Finite stand-in for B_sigma on nets with unbounded hidden activations.

    Interval propagation: the magnitude of any node in layer ``l`` is at most
    ``m_{l-1} * c_p * (bound of layer l-1)``, starting from the data bound.
    Returns the max over hidden layers.
    """
    bound = data_bound.B_x
    best = 0.0
    for l in range(1, len(spec.layer_widths) - 1):
        bound = spec.layer_widths[l - 1] * c_p * bound
        out = activation_output_bound(spec.activations[l - 1])
        layer_bound = bound if out is None else min(bound, out)
        best = max(best, layer_bound)
    return best


def compute_cg(
    spec: NetworkSpec,
    c_p: float,
    bounds: ActivationBounds | None = None,
    effective_B_sigma: float | None = None,
    include_biases: bool = False,
) -> float:
    """Closed-form per-example gradient-norm bound for a clipped critic.

    Args:
        spec: critic architecture (scalar output).
        c_p: weight clip constant; must satisfy check_clip_precondition.
        bounds: aggregate activation bounds (derived from spec when omitted).
        effective_B_sigma: finite hidden-output bound, required when the
            architecture uses unbounded activations (see
            effective_output_bound).
        include_biases: add the bias-gradient allowance
            ``2 * B_sigma * B_sigma' * sum_l m_l`` to the weight-only bound.

    Returns:
        2 * c_p * B_sigma * B_sigma'^2 * sum_{k=1}^{H-1} m_k * m_{k+1},
        plus the bias term when requested.
    """
    if bounds is None:
        bounds = ActivationBounds.for_spec(spec)
    check = check_clip_precondition(spec, c_p)
    if not check.passed:
        raise ValueError(
            f"clip constant {c_p} violates the precondition at hidden layer "
            f"{check.layer} (limit {check.limit:.6g})"
        )
    b_sigma = bounds.B_sigma if effective_B_sigma is None else effective_B_sigma
    if b_sigma is None:
        raise ValueError(
            "architecture has unbounded activations; supply effective_B_sigma "
            "(see effective_output_bound)"
        )
    widths = spec.layer_widths
    pair_sum = sum(widths[k] * widths[k + 1] for k in range(1, spec.depth))
    cg = 2.0 * c_p * b_sigma * bounds.B_sigma_prime**2 * pair_sum
    if include_biases:
        cg += 2.0 * b_sigma * bounds.B_sigma_prime * sum(widths[1:])
    return cg


def critic_pair_gradient(
    spec: NetworkSpec, params: ParameterSet, x: np.ndarray, y: np.ndarray
):
    """Gradient of ``f(x) - f(y)`` w.r.t. the critic parameters."""
    _, trace_x = forward(spec, params, x)
    _, trace_y = forward(spec, params, y)
    one = np.ones(spec.output_width)
    gx = backward(spec, params, trace_x, one)
    gy = backward(spec, params, trace_y, -one)
    out = gx
    out.weight_grads = [a + b for a, b in zip(gx.weight_grads, gy.weight_grads)]
    out.bias_grads = [a + b for a, b in zip(gx.bias_grads, gy.bias_grads)]
    out.recompute_norm()
    return out


def empirical_grad_bound(
    spec: NetworkSpec,
    c_p: float,
    n_trials: int,
    data_bound: DataBound,
    rng: np.random.Generator,
    include_biases: bool = False,
) -> float:
    """Max observed per-example critic gradient norm over random trials.

    Each trial draws clipped parameters uniform on [-c_p, c_p] (biases zero
    unless ``include_biases``), a record uniform in the B_x ball, and a fake
    sample uniform on [0, 1]^d standing in for a sigmoid generator's output.
    Measures ``|| grad_w [f(x) - f(y)] ||``.
    """
    d = spec.input_width
    worst = 0.0
    for _ in range(n_trials):
        params = init_params(spec, c_p, rng)
        if include_biases:
            params.biases = [rng.uniform(-c_p, c_p, size=b.shape) for b in params.biases]
        x = rng.standard_normal(d)
        radius = data_bound.B_x * rng.uniform() ** (1.0 / d)
        x *= radius / np.linalg.norm(x)
        y = rng.uniform(0.0, 1.0, size=d)
        g = critic_pair_gradient(spec, params, x, y)
        if not include_biases:
            # the closed form carries no bias term; measure weights only
            g.bias_grads = [np.zeros_like(b) for b in g.bias_grads]
            g.recompute_norm()
        worst = max(worst, g.norm)
    return worst
