import numpy as np
import pytest

from videograph.fusion import (
    FusionInput,
    gfm_forward,
    gfm_gradients,
    init_params,
    loss_sum_squares,
)
from videograph.verification import (
    finite_difference_gradients,
    random_fusion_instance,
    relative_error,
)


def empty_edges(n):
    return np.zeros((0, 2), dtype=np.intp), np.zeros(0, dtype=np.int8)


class TestAnalyticMicroCases:
    def test_zero_layer_projection_gradients_are_exact(self, rng):
        # with L=0 the loss is sum((F W_l + b_l) W_p + b_p)^2: closed form
        d_node, d_model, d_llm = 4, 3, 5
        params = init_params(d_node, d_model, d_llm, 0, rng)
        features = rng.standard_normal((6, d_node))
        edges, types = empty_edges(6)
        target = FusionInput("t", features, edges, types)

        grads = gfm_gradients(params, target, [])
        lifted = features @ params.lift_weight + params.lift_bias
        out = lifted @ params.proj_weight + params.proj_bias

        np.testing.assert_allclose(
            grads["proj.weight"], 2.0 * lifted.T @ out, atol=1e-12
        )
        np.testing.assert_allclose(grads["proj.bias"], 2.0 * out.sum(axis=0), atol=1e-12)
        np.testing.assert_allclose(
            grads["lift.weight"], 2.0 * features.T @ (out @ params.proj_weight.T), atol=1e-12
        )
        np.testing.assert_allclose(
            grads["lift.bias"], 2.0 * (out @ params.proj_weight.T).sum(axis=0), atol=1e-12
        )

    def test_loss_matches_forward(self, rng):
        target, related, params = random_fusion_instance(rng, layers=1, n_related=1)
        out = gfm_forward(target, related, params)
        assert loss_sum_squares(params, target, related) == pytest.approx(
            float(np.sum(out.target_tokens**2)), rel=1e-12
        )


class TestFiniteDifferences:
    def test_random_tiny_instances(self, rng):
        worst = 0.0
        for _ in range(5):
            target, related, params = random_fusion_instance(
                rng, max_nodes=5, d_node=6, d_model=6, d_llm=4,
                layers=2, n_related=int(rng.integers(0, 3)),
            )
            grads = gfm_gradients(params, target, related)
            numeric = finite_difference_gradients(params, target, related)
            assert set(grads) == set(numeric)
            for name in numeric:
                worst = max(worst, relative_error(grads[name], numeric[name]))
        assert worst < 1e-4

    def test_zero_input_alpha_gradient(self, rng):
        # all-zero node features force alpha to act only through the
        # class-embedding pathway; finite differences stay the oracle
        d = 5
        params = init_params(d, d, 3, 2, rng)
        for layer in params.layers:
            layer.alpha[:] = rng.uniform(-0.5, 0.5, size=d)
        edges, types = empty_edges(3)
        target = FusionInput("t", np.zeros((3, d)), edges, types)
        related = [FusionInput("r", np.zeros((2, d)), *empty_edges(2))]

        grads = gfm_gradients(params, target, related)
        numeric = finite_difference_gradients(params, target, related)
        for i in range(2):
            name = f"layers.{i}.alpha"
            assert relative_error(grads[name], numeric[name]) < 1e-6
            assert np.any(numeric[name] != 0.0)

    def test_separate_edge_weight_gradients(self, rng):
        target, related, params = random_fusion_instance(
            rng, max_nodes=5, layers=1, n_related=1, separate_edge_weights=True
        )
        grads = gfm_gradients(params, target, related)
        numeric = finite_difference_gradients(params, target, related)
        for name in numeric:
            assert relative_error(grads[name], numeric[name]) < 1e-4

    def test_gradients_cover_every_tensor(self, rng):
        target, related, params = random_fusion_instance(rng, layers=2, n_related=2)
        grads = gfm_gradients(params, target, related)
        assert set(grads) == set(params.flatten())
        for name, grad in grads.items():
            assert grad.shape == params.flatten()[name].shape
