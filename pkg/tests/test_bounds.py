import numpy as np
import pytest

from dpwgan.bounds import (
    ActivationBounds,
    DataBound,
    activation_derivative_bound,
    activation_output_bound,
    check_clip_precondition,
    compute_cg,
    critic_pair_gradient,
    effective_output_bound,
    empirical_grad_bound,
    max_clip_constant,
)
from dpwgan.network import NetworkSpec, backward_deltas, forward, init_params


def uniform_spec(widths, activation):
    return NetworkSpec(tuple(widths), tuple([activation] * (len(widths) - 1)))


class TestActivationTable:
    @pytest.mark.parametrize(
        "name,out,deriv",
        [
            ("sigmoid", 1.0, 0.25),
            ("tanh", 1.0, 1.0),
            ("relu", None, 1.0),
            ("identity", None, 1.0),
            ("leaky_relu:0.2", None, 1.0),
            ("leaky_relu:1.5", None, 1.5),
        ],
    )
    def test_table(self, name, out, deriv):
        assert activation_output_bound(name) == out
        assert activation_derivative_bound(name) == deriv

    def test_aggregate_bounds_for_mixed_spec(self):
        spec = NetworkSpec((2, 8, 1), ("sigmoid", "identity"))
        bounds = ActivationBounds.for_spec(spec)
        assert bounds.B_sigma == 1.0  # hidden sigmoid outputs
        assert bounds.B_sigma_prime == 1.0  # identity output dominates


class TestPrecondition:
    def test_canonical_sigmoid_net_passes(self):
        spec = uniform_spec([4, 3, 1], "sigmoid")
        result = check_clip_precondition(spec, 0.01)
        assert result.passed
        assert result.limit == pytest.approx(4.0 / 3.0)

    def test_large_clip_fails_at_width_three_layer(self):
        spec = uniform_spec([4, 3, 1], "sigmoid")
        result = check_clip_precondition(spec, 10.0)
        assert not result.passed
        assert result.layer == 1  # the hidden layer of width 3

    def test_boundary_equality_passes(self):
        spec = uniform_spec([2, 1, 1], "identity")
        assert check_clip_precondition(spec, 1.0).passed

    def test_no_hidden_layers_passes_vacuously(self):
        spec = uniform_spec([3, 1], "identity")
        assert check_clip_precondition(spec, 1e9).passed
        assert max_clip_constant(spec) == np.inf

    def test_max_clip_constant_uses_per_layer_derivative_bounds(self):
        spec = NetworkSpec((2, 8, 8, 1), ("sigmoid", "sigmoid", "identity"))
        assert max_clip_constant(spec) == pytest.approx(0.5)


class TestComputeCg:
    def test_canonical_431_sigmoid(self):
        spec = uniform_spec([4, 3, 1], "sigmoid")
        assert compute_cg(spec, 0.01) == pytest.approx(3.75e-3, abs=1e-15)

    def test_221_sigmoid(self):
        spec = uniform_spec([2, 2, 1], "sigmoid")
        assert compute_cg(spec, 0.01) == pytest.approx(2.5e-3, abs=1e-15)

    def test_zero_clip_gives_zero_bound(self):
        spec = uniform_spec([4, 3, 1], "sigmoid")
        assert compute_cg(spec, 0.0) == 0.0

    def test_linear_in_clip_constant(self):
        spec = uniform_spec([5, 4, 2, 1], "tanh")
        base = compute_cg(spec, 0.05)
        assert compute_cg(spec, 0.1) == pytest.approx(2.0 * base)

    def test_monotone_in_widths(self):
        small = compute_cg(uniform_spec([4, 3, 1], "sigmoid"), 0.01)
        wide = compute_cg(uniform_spec([4, 6, 1], "sigmoid"), 0.01)
        assert wide > small

    def test_precondition_violation_is_fatal(self):
        spec = uniform_spec([4, 3, 1], "sigmoid")
        with pytest.raises(ValueError):
            compute_cg(spec, 10.0)

    def test_unbounded_activation_needs_effective_bound(self):
        spec = uniform_spec([4, 3, 1], "relu")
        with pytest.raises(ValueError):
            compute_cg(spec, 0.1)
        eff = effective_output_bound(spec, 0.1, DataBound(1.0))
        assert eff == pytest.approx(0.4)  # 4 * 0.1 * 1.0
        got = compute_cg(spec, 0.1, effective_B_sigma=eff)
        assert got == pytest.approx(2 * 0.1 * 0.4 * 1.0 * 3)

    def test_bias_augmented_bound_adds_width_sum(self):
        spec = uniform_spec([4, 3, 1], "sigmoid")
        plain = compute_cg(spec, 0.01)
        with_bias = compute_cg(spec, 0.01, include_biases=True)
        assert with_bias == pytest.approx(plain + 2 * 1.0 * 0.25 * (3 + 1))


class TestEmpiricalBound:
    def test_zero_weights_give_zero_gradient(self):
        spec = uniform_spec([3, 2, 1], "sigmoid")
        params = init_params(spec, 0.0, np.random.default_rng(0))
        g = critic_pair_gradient(spec, params, np.zeros(3), np.ones(3) * 0.5)
        assert g.norm == 0.0

    def test_canonical_431_respects_closed_form(self):
        spec = uniform_spec([4, 3, 1], "sigmoid")
        rng = np.random.default_rng(101)
        observed = empirical_grad_bound(spec, 0.01, 10_000, DataBound(1.0), rng)
        assert 0.0 < observed <= compute_cg(spec, 0.01)

    def test_observed_max_monotone_in_clip_constant(self):
        spec = uniform_spec([4, 3, 1], "sigmoid")
        maxima = []
        for c_p in (0.001, 0.01, 0.1):
            rng = np.random.default_rng(55)
            maxima.append(empirical_grad_bound(spec, c_p, 500, DataBound(1.0), rng))
        assert maxima[0] < maxima[1] < maxima[2]

    def test_error_vectors_match_independent_recomputation(self):
        rng = np.random.default_rng(77)
        for _ in range(10):
            widths = [int(rng.integers(2, 6)) for _ in range(3)] + [1]
            spec = uniform_spec(widths, "sigmoid")
            params = init_params(spec, 0.05, rng)
            x = rng.standard_normal(widths[0])
            _, trace = forward(spec, params, x)
            deltas = backward_deltas(spec, params, trace, np.array([1.0]))
            for l in range(spec.depth - 1, 0, -1):
                z = trace.pre_activations[l - 1]
                s = 1.0 / (1.0 + np.exp(-z))
                recomputed = (params.weights[l].T @ deltas[l]) * (s * (1.0 - s))
                assert deltas[l - 1] == pytest.approx(recomputed, abs=1e-12)
