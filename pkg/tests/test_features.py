from dataclasses import replace

import numpy as np
import pytest

from data import DataMatrix
from errors import ArgumentError, ShapeError, StateError
from features import (
    FeatureConfig,
    FeatureMap,
    build_feature_map,
    forward,
    pretrain_final_checkpoint,
    reblend,
    vjp,
)


def test_identity_map():
    fmap = FeatureMap.create("identity", 3, np.random.default_rng(0))
    x = np.arange(6.0).reshape(2, 3)
    assert fmap.out_dim == 3 and fmap.n_params == 0
    np.testing.assert_array_equal(forward(fmap, x), x)
    np.testing.assert_array_equal(vjp(fmap, x, np.ones((2, 3))), np.ones((2, 3)))


def test_random_relu_projection_is_non_negative():
    fmap = FeatureMap.create("random-relu-projection", 4, np.random.default_rng(1), out_dim=16)
    out = fmap.forward(np.random.default_rng(2).normal(size=(10, 4)))
    assert out.shape == (10, 16) and np.all(out >= 0)


def test_forward_checks_columns():
    fmap = FeatureMap.create("mlp", 3, np.random.default_rng(3), out_dim=4, hidden=5)
    with pytest.raises(ShapeError):
        fmap.forward(np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        fmap.vjp(np.zeros((2, 3)), np.zeros((2, 5)))


@pytest.mark.parametrize("kind", ["mlp", "random-relu-projection"])
def test_input_vjp_matches_finite_differences(kind):
    rng = np.random.default_rng(4)
    fmap = FeatureMap.create(kind, 3, rng, out_dim=4, hidden=6)
    x = rng.normal(size=(5, 3))
    cot = rng.normal(size=(5, 4))
    analytic = fmap.vjp(x, cot)
    numeric = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += 1e-6
        down[idx] -= 1e-6
        numeric[idx] = np.sum((fmap.forward(up) - fmap.forward(down)) * cot) / 2e-6
    np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)


def test_param_vjp_matches_finite_differences():
    rng = np.random.default_rng(5)
    fmap = FeatureMap.create("mlp", 2, rng, out_dim=3, hidden=4)
    x = rng.normal(size=(6, 2))
    cot = rng.normal(size=(6, 3))
    analytic = fmap.param_vjp(x, cot, fmap.params)
    numeric = np.zeros(fmap.n_params)
    for i in range(fmap.n_params):
        up, down = fmap.params.copy(), fmap.params.copy()
        up[i] += 1e-6
        down[i] -= 1e-6
        numeric[i] = np.sum((fmap.forward(x, up) - fmap.forward(x, down)) * cot) / 2e-6
    np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)


def test_param_vjp_needs_mlp():
    fmap = FeatureMap.create("identity", 2, np.random.default_rng(6))
    with pytest.raises(ArgumentError):
        fmap.param_vjp(np.zeros((1, 2)), np.zeros((1, 2)), fmap.params)


class TestBlending:
    def _two_checkpoints(self):
        fmap = FeatureMap.create("mlp", 2, np.random.default_rng(7), out_dim=3, hidden=4)
        return replace(fmap, final_checkpoint=fmap.init_checkpoint + 1.0)

    def test_endpoints(self):
        fmap = self._two_checkpoints()
        np.testing.assert_array_equal(fmap.blend(0.0).params, fmap.init_checkpoint)
        np.testing.assert_array_equal(fmap.blend(1.0).params, fmap.final_checkpoint)
        np.testing.assert_allclose(fmap.blend(0.25).params, fmap.init_checkpoint + 0.25)

    def test_reblend_draws_beta_in_unit_interval(self):
        fmap = self._two_checkpoints()
        rng = np.random.default_rng(8)
        betas = [reblend(fmap, rng).beta for _ in range(50)]
        assert all(0.0 <= b < 1.0 for b in betas)
        assert len(set(betas)) == 50

    def test_mismatched_checkpoints(self):
        fmap = replace(self._two_checkpoints(), final_checkpoint=np.zeros(3))
        with pytest.raises(StateError):
            fmap.blend(0.5)

    def test_dict_round_trip(self):
        fmap = self._two_checkpoints().blend(0.3)
        restored = FeatureMap.from_dict(fmap.to_dict())
        assert restored.beta == 0.3
        np.testing.assert_array_equal(restored.params, fmap.params)


class TestPretraining:
    def test_learns_separable_classes(self, three_blobs):
        rng = np.random.default_rng(9)
        fmap = FeatureMap.create("mlp", 2, rng, out_dim=8, hidden=16)
        trained = pretrain_final_checkpoint(fmap, three_blobs, epochs=30, rng=rng, learning_rate=0.05)
        assert trained.train_accuracy > 0.9
        np.testing.assert_array_equal(trained.init_checkpoint, fmap.init_checkpoint)
        assert not np.array_equal(trained.final_checkpoint, trained.init_checkpoint)

    def test_zero_epochs_keeps_init(self, three_blobs):
        rng = np.random.default_rng(10)
        fmap = FeatureMap.create("mlp", 2, rng, out_dim=4, hidden=4)
        trained = pretrain_final_checkpoint(fmap, three_blobs, epochs=0, rng=rng)
        np.testing.assert_array_equal(trained.final_checkpoint, fmap.init_checkpoint)

    def test_rejects_other_kinds_and_unlabeled_data(self, three_blobs, rng):
        with pytest.raises(ArgumentError):
            pretrain_final_checkpoint(FeatureMap.create("identity", 2, rng), three_blobs, 1, rng)
        mlp = FeatureMap.create("mlp", 2, rng, out_dim=4, hidden=4)
        with pytest.raises(ArgumentError):
            pretrain_final_checkpoint(mlp, DataMatrix(three_blobs.values), 1, rng)

    def test_build_feature_map(self, three_blobs, rng):
        fmap = build_feature_map(FeatureConfig(kind="mlp", out_dim=4, hidden=8, pretrain_epochs=2), three_blobs, rng)
        assert fmap.train_accuracy is not None and fmap.out_dim == 4
        identity = build_feature_map(FeatureConfig(kind="identity"), three_blobs, rng)
        assert identity.out_dim == 2 and identity.train_accuracy is None


def test_feature_config_validates():
    with pytest.raises(ArgumentError):
        FeatureConfig(kind="resnet")
