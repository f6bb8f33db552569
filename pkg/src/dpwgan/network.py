"""Dense fully-connected networks: forward/backward passes, RMSProp, weight clipping.

Everything here is a pure function of its inputs and operates on float64
numpy arrays. Weight matrix ``W[l]`` has shape ``(widths[l+1], widths[l])``;
entry ``(i, j)`` connects node ``j`` of the previous layer to node ``i`` of
the current one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# activation -> (value, derivative) evaluated elementwise on pre-activations
_ACTIVATIONS = {
    "sigmoid": (
        lambda z: 1.0 / (1.0 + np.exp(-z)),
        lambda z: (s := 1.0 / (1.0 + np.exp(-z))) * (1.0 - s),
    ),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0.0).astype(float)),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
}

LEAKY_PREFIX = "leaky_relu"


def _parse_activation(name: str):
    """Return (value, derivative) callables for an activation name.

    ``leaky_relu`` accepts an optional slope suffix, e.g. ``leaky_relu:0.2``.
    """
    if name in _ACTIVATIONS:
        return _ACTIVATIONS[name]
    if name.startswith(LEAKY_PREFIX):
        slope = leaky_slope(name)
        return (
            lambda z: np.where(z > 0.0, z, slope * z),
            lambda z: np.where(z > 0.0, 1.0, slope),
        )
    raise ValueError(f"unknown activation {name!r}")


def leaky_slope(name: str, default: float = 0.2) -> float:
    """Slope of a leaky ReLU activation name (default 0.2)."""
    _, _, suffix = name.partition(":")
    return float(suffix) if suffix else default


def activation_names() -> list[str]:
    return sorted(_ACTIVATIONS) + [LEAKY_PREFIX]


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a fully-connected network.

    Attributes:
        layer_widths: widths from input (index 0) through output, length H+1.
        activations: one activation name per non-input layer, length H.
    """

    layer_widths: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.layer_widths) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError("layer widths must be >= 1")
        if len(self.activations) != self.depth:
            raise ValueError(
                f"expected {self.depth} activations, got {len(self.activations)}"
            )
        for name in self.activations:
            _parse_activation(name)

    @property
    def depth(self) -> int:
        """Number of non-input layers (H)."""
        return len(self.layer_widths) - 1

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]

    @property
    def output_width(self) -> int:
        return self.layer_widths[-1]

    def hidden_widths(self) -> tuple[int, ...]:
        return self.layer_widths[1:-1]


@dataclass
class ParameterSet:
    """Weights and biases of a network; ``weights[l]`` is (m_{l+1}, m_l)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "ParameterSet":
        return ParameterSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> list[np.ndarray]:
        """Weights then biases, in layer order (the canonical flattening)."""
        return list(self.weights) + list(self.biases)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(a))) if a.size else 0.0 for a in self.flat())


@dataclass
class ActivationTrace:
    """Pre/post activations recorded by a forward pass.

    Arrays are 1-d for a single example or 2-d ``(batch, width)`` for a
    batched pass; ``post_activations[0]`` is the input itself.
    """

    pre_activations: list[np.ndarray]
    post_activations: list[np.ndarray]

    @property
    def input(self) -> np.ndarray:
        return self.post_activations[0]

    @property
    def output(self) -> np.ndarray:
        return self.post_activations[-1]


@dataclass
class GradientSet:
    """Per-layer weight/bias gradients plus their joint Frobenius norm."""

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    norm: float = 0.0

    def flat(self) -> list[np.ndarray]:
        return list(self.weight_grads) + list(self.bias_grads)

    @staticmethod
    def zeros_like(params: ParameterSet) -> "GradientSet":
        return GradientSet(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
            0.0,
        )

    def recompute_norm(self) -> float:
        self.norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in self.flat())))
        return self.norm


@dataclass
class RmspropState:
    """Running mean-square accumulators, one array per parameter array."""

    running_sq_avg: list[np.ndarray]
    decay: float = 0.9
    epsilon_stabilizer: float = 1e-8

    @staticmethod
    def zeros_like(params: ParameterSet, decay: float = 0.9, eps: float = 1e-8) -> "RmspropState":
        return RmspropState([np.zeros_like(a) for a in params.flat()], decay, eps)

    def copy(self) -> "RmspropState":
        return RmspropState(
            [a.copy() for a in self.running_sq_avg], self.decay, self.epsilon_stabilizer
        )


def init_params(
    spec: NetworkSpec, scale: float, rng: np.random.Generator
) -> ParameterSet:
    """Weights uniform on [-scale, scale], biases zero."""
    weights = [
        rng.uniform(-scale, scale, size=(spec.layer_widths[l + 1], spec.layer_widths[l]))
        for l in range(spec.depth)
    ]
    biases = [np.zeros(spec.layer_widths[l + 1]) for l in range(spec.depth)]
    return ParameterSet(weights, biases)


def _check_shapes(spec: NetworkSpec, params: ParameterSet) -> None:
    if len(params.weights) != spec.depth or len(params.biases) != spec.depth:
        raise ValueError("parameter count does not match network depth")
    for l in range(spec.depth):
        expect = (spec.layer_widths[l + 1], spec.layer_widths[l])
        if params.weights[l].shape != expect:
            raise ValueError(f"weight {l} has shape {params.weights[l].shape}, expected {expect}")


def forward(
    spec: NetworkSpec, params: ParameterSet, x: np.ndarray
) -> tuple[np.ndarray, ActivationTrace]:
    """Evaluate the network on one input vector.

    Returns the output vector and the full activation trace.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != spec.input_width:
        raise ValueError(
            f"input has shape {x.shape}, expected ({spec.input_width},)"
        )
    _check_shapes(spec, params)
    pre, post = [], [x]
    for l in range(spec.depth):
        z = params.weights[l] @ post[-1] + params.biases[l]
        act, _ = _parse_activation(spec.activations[l])
        pre.append(z)
        post.append(act(z))
    return post[-1], ActivationTrace(pre, post)


def forward_batch(
    spec: NetworkSpec, params: ParameterSet, X: np.ndarray
) -> tuple[np.ndarray, ActivationTrace]:
    """Evaluate the network on a batch ``X`` of shape (n, input_width)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != spec.input_width:
        raise ValueError(f"batch has shape {X.shape}, expected (n, {spec.input_width})")
    pre, post = [], [X]
    for l in range(spec.depth):
        z = post[-1] @ params.weights[l].T + params.biases[l]
        act, _ = _parse_activation(spec.activations[l])
        pre.append(z)
        post.append(act(z))
    return post[-1], ActivationTrace(pre, post)


def backward_deltas(
    spec: NetworkSpec,
    params: ParameterSet,
    trace: ActivationTrace,
    output_grad: np.ndarray,
) -> list[np.ndarray]:
    """Per-layer error vectors.

    delta[H-1] = output_grad * act'(z_H); delta[l-1] = (W_{l+1}^T delta[l]) * act'(z_l).
    Works for single examples (1-d) and batches (2-d) alike.
    """
    deltas = [None] * spec.depth
    _, dact = _parse_activation(spec.activations[-1])
    deltas[-1] = np.asarray(output_grad, dtype=float) * dact(trace.pre_activations[-1])
    for l in range(spec.depth - 1, 0, -1):
        _, dact = _parse_activation(spec.activations[l - 1])
        deltas[l - 1] = (deltas[l] @ params.weights[l]) * dact(trace.pre_activations[l - 1])
    return deltas


def backward(
    spec: NetworkSpec,
    params: ParameterSet,
    trace: ActivationTrace,
    output_grad: np.ndarray,
) -> GradientSet:
    """Gradients of ``output_grad . output`` w.r.t. all weights and biases.

    For a batched trace the result is the gradient summed over the batch.
    """
    deltas = backward_deltas(spec, params, trace, output_grad)
    batched = trace.input.ndim == 2
    wgrads, bgrads = [], []
    for l in range(spec.depth):
        a_prev = trace.post_activations[l]
        d = deltas[l]
        if batched:
            wgrads.append(d.T @ a_prev)
            bgrads.append(d.sum(axis=0))
        else:
            wgrads.append(np.outer(d, a_prev))
            bgrads.append(d.copy())
    out = GradientSet(wgrads, bgrads)
    out.recompute_norm()
    return out


def input_gradient(
    spec: NetworkSpec, params: ParameterSet, deltas: list[np.ndarray]
) -> np.ndarray:
    """Gradient w.r.t. the network input, given error vectors from backward_deltas."""
    return deltas[0] @ params.weights[0]


def rmsprop_step(
    params: ParameterSet,
    grads: GradientSet,
    state: RmspropState,
    lr: float,
    direction: str,
) -> tuple[ParameterSet, RmspropState]:
    """One RMSProp update: p' = p +/- lr * g / sqrt(s' + eps), s' = d*s + (1-d)*g^2.

    ``direction`` is "ascent" or "descent".
    """
    if direction not in ("ascent", "descent"):
        raise ValueError(f"direction must be 'ascent' or 'descent', got {direction!r}")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    sign = 1.0 if direction == "ascent" else -1.0
    d, eps = state.decay, state.epsilon_stabilizer
    flat_p = params.flat()
    flat_g = grads.flat()
    new_sq, new_p = [], []
    for p, g, s in zip(flat_p, flat_g, state.running_sq_avg):
        s2 = d * s + (1.0 - d) * g * g
        new_sq.append(s2)
        new_p.append(p + sign * lr * g / np.sqrt(s2 + eps))
    n_w = len(params.weights)
    return (
        ParameterSet(new_p[:n_w], new_p[n_w:]),
        RmspropState(new_sq, d, eps),
    )


def clip_weights(params: ParameterSet, c_p: float) -> ParameterSet:
    """Clamp every weight and bias entry to [-c_p, c_p]."""
    if c_p <= 0:
        raise ValueError("clip constant must be positive")
    return ParameterSet(
        [np.clip(w, -c_p, c_p) for w in params.weights],
        [np.clip(b, -c_p, c_p) for b in params.biases],
    )
