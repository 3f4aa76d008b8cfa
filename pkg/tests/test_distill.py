import time

import numpy as np
import pandas as pd
import pytest

import distill
from ablation import stability_windows
from charfn import LossBreakdown
from data import DataMatrix
from distill import (
    AdamState,
    DistillConfig,
    SyntheticSet,
    TrainLog,
    distill_step,
    init_synthetic,
    run,
)
from errors import ArgumentError, ConfigError, NumericError
from evaluation import compare_sources
from features import FeatureConfig, FeatureMap
from freq_sampler import FreqSampler, spread_scale

IDENTITY = FeatureConfig(kind="identity")


def _small_config(**overrides):
    settings = dict(iterations=20, ipc=4, q_freqs=32, batch_real=32, log_every=10)
    settings.update(overrides)
    return DistillConfig(**settings)


class TestConfig:
    def test_defaults(self):
        config = DistillConfig()
        assert config.alpha == 0.5 and config.effective_max_steps == 1

    def test_sampler_disabled(self):
        assert DistillConfig(sampler_enabled=False).effective_max_steps == 0

    @pytest.mark.parametrize("overrides", [
        {"iterations": 0},
        {"alpha": 1.2},
        {"max_steps_per_iter": -1},
        {"batch_real": 0},
        {"init_strategy": "zeros"},
        {"lr_synth": 0.0},
        {"grad_clip": -1.0},
        {"init_scale": 0.0},
    ])
    def test_invalid_values(self, overrides):
        with pytest.raises(ConfigError):
            DistillConfig(**overrides)


class TestInitSynthetic:
    def test_random_real_copies_class_rows(self, three_blobs, rng):
        synth = init_synthetic(three_blobs, 5, "random-real", rng)
        assert synth.values.shape == (15, 2)
        assert synth.labels.tolist() == [0] * 5 + [1] * 5 + [2] * 5
        for c in range(3):
            class_rows = {tuple(r) for r in three_blobs.class_values(c)}
            assert all(tuple(r) in class_rows for r in synth.values[synth.labels == c])
            assert len({tuple(r) for r in synth.values[synth.labels == c]}) == 5

    def test_ipc_larger_than_class(self, rng):
        real = DataMatrix(np.array([[0.0], [1.0]]), np.array([0, 1]))
        synth = init_synthetic(real, 3, "random-real", rng)
        assert np.all(synth.values[synth.labels == 1] == 1.0)

    def test_gaussian_noise_with_zero_variance_is_the_mean(self, three_blobs, rng):
        synth = init_synthetic(three_blobs, 2, "gaussian-noise", rng, variance=0.0)
        np.testing.assert_allclose(synth.values[::2], three_blobs.class_means())

    def test_needs_labels(self, rng):
        with pytest.raises(ArgumentError):
            init_synthetic(DataMatrix(np.zeros((3, 2))), 2, "random-real", rng)


def _fixed_point_setup():
    real = DataMatrix(
        np.array([[0.0, 1.0], [1.0, -1.0], [2.0, 0.5], [5.0, 5.0], [6.0, 4.0], [4.5, 6.0]]),
        np.array([0, 0, 0, 1, 1, 1]),
    )
    synth = SyntheticSet(
        values=real.values.copy(),
        labels=real.labels.copy(),
        ipc=3,
        optimizer=AdamState.zeros(real.values.shape, 2),
    )
    fmap = FeatureMap.create("identity", 2, np.random.default_rng(0))
    return real, synth, fmap


class TestDistillStep:
    def test_matching_synthetic_set_is_a_fixed_point(self):
        real, synth, fmap = _fixed_point_setup()
        sampler = FreqSampler.create(2, 16)
        config = DistillConfig(q_freqs=16, batch_real=None, alpha=0.5)
        updated, new_sampler, record = distill_step(synth, real, fmap, sampler, config, 1, np.random.default_rng(1))
        assert np.array_equal(updated.values, synth.values)
        assert np.array_equal(new_sampler.log_scales, sampler.log_scales)
        assert record.cfd == pytest.approx(1e-6)
        assert record.class_id == 1 and record.update_norm == 0.0

    def test_only_the_active_class_moves(self, three_blobs, rng):
        synth = init_synthetic(three_blobs, 4, "random-real", rng)
        fmap = FeatureMap.create("identity", 2, rng)
        sampler = FreqSampler.create(2, 32)
        updated, _, _ = distill_step(synth, three_blobs, fmap, sampler, _small_config(), 2, rng)
        moved = np.any(updated.values != synth.values, axis=1)
        assert moved[synth.labels == 2].any()
        assert not moved[synth.labels != 2].any()
        assert updated.optimizer.steps.tolist() == [0, 0, 1]

    def test_disabled_sampler_keeps_scales(self, three_blobs, rng):
        synth = init_synthetic(three_blobs, 4, "random-real", rng)
        fmap = FeatureMap.create("identity", 2, rng)
        sampler = FreqSampler.create(2, 32)
        config = _small_config(sampler_enabled=False)
        _, new_sampler, _ = distill_step(synth, three_blobs, fmap, sampler, config, 0, rng)
        assert np.array_equal(new_sampler.log_scales, sampler.log_scales)
        assert sampler.last_draw is None

    def test_non_finite_loss_is_reported(self, three_blobs, rng, monkeypatch):
        synth = init_synthetic(three_blobs, 4, "random-real", rng)
        fmap = FeatureMap.create("identity", 2, rng)

        def broken(real, synth_feat, freqs, config, freq_grad=True):
            nan = LossBreakdown(float("nan"), np.full(freqs.shape[0], np.nan), np.nan, np.nan)
            return nan, np.zeros_like(synth_feat), np.zeros_like(freqs)

        monkeypatch.setattr(distill, "cfd_value_and_grad", broken)
        with pytest.raises(NumericError, match="iteration 7, class 0"):
            distill_step(synth, three_blobs, fmap, FreqSampler.create(2, 32), _small_config(), 0, rng, iteration=7)

    def test_missing_class(self, three_blobs, rng):
        synth = init_synthetic(three_blobs, 2, "random-real", rng)
        synth.labels[synth.labels == 2] = 1
        fmap = FeatureMap.create("identity", 2, rng)
        with pytest.raises(LookupError):
            distill_step(synth, three_blobs, fmap, FreqSampler.create(2, 32), _small_config(), 2, rng)


class TestRun:
    def test_single_iteration_single_class(self):
        real = DataMatrix(np.random.default_rng(0).normal(size=(10, 2)), np.zeros(10, dtype=int))
        result = run(real, _small_config(iterations=1, ipc=2), IDENTITY)
        assert len(result.log) == 1

    def test_one_record_per_class_and_iteration(self, three_blobs):
        result = run(three_blobs, _small_config(iterations=3, shuffle_classes=True), IDENTITY)
        frame = result.log.to_frame()
        assert len(frame) == 9
        assert sorted(frame[frame.iteration == 1].class_id) == [0, 1, 2]

    def test_same_seed_same_result(self, three_blobs):
        config = _small_config(iterations=5)
        features = FeatureConfig(kind="mlp", out_dim=4, hidden=8, pretrain_epochs=1)
        a, b = run(three_blobs, config, features), run(three_blobs, config, features)
        assert np.array_equal(a.synthetic.values, b.synthetic.values)
        assert np.array_equal(a.log.cfd_values(), b.log.cfd_values())

    def test_cfd_decreases_from_a_poor_start(self, three_blobs):
        config = _small_config(
            iterations=150, init_strategy="gaussian-noise", init_variance=9.0, lr_synth=0.05, q_freqs=64
        )
        cfd = run(three_blobs, config, IDENTITY).log.cfd_values()
        assert cfd[-30:].mean() < cfd[:30].mean()

    def test_writes_checkpoint_and_log(self, three_blobs, tmp_path):
        result = run(three_blobs, _small_config(iterations=2), IDENTITY, out_dir=tmp_path)
        assert result.checkpoint_path.exists()
        frame = pd.read_csv(tmp_path / "train_log.csv")
        assert list(frame.columns) == [
            "iteration", "class_id", "cfd", "amp_term", "phase_term",
            "scale_norm", "beta", "update_norm", "wall_clock",
        ]
        assert len(frame) == 6

    def test_train_log_accessors(self):
        log = TrainLog()
        assert len(log) == 0 and log.to_frame().empty

    def test_initial_scale_follows_the_feature_spread(self, three_blobs):
        config = _small_config(iterations=1, sampler_enabled=False)
        result = run(three_blobs, config, IDENTITY)
        expected = spread_scale(three_blobs.values, three_blobs.labels)
        np.testing.assert_allclose(np.exp(result.sampler.log_scales), expected)

    def test_sampler_adapts_on_the_toy_task(self, three_blobs):
        config = _small_config(iterations=200, q_freqs=64)
        result = run(three_blobs, config, IDENTITY)
        start = FreqSampler.create(2, 64, init_scale=spread_scale(three_blobs.values, three_blobs.labels))
        frame = result.log.to_frame()
        assert frame.scale_norm.iloc[0] == pytest.approx(start.scale_norm(), rel=0.02)
        assert result.sampler.scale_norm() > 1.1 * start.scale_norm()


@pytest.mark.slow
def test_toy_distillation_beats_random_subset(toy_task):
    real, test = toy_task
    started = time.perf_counter()
    accuracy = {"distilled": [], "random-subset": [], "full": []}
    window_increase = []
    for seed in range(5):
        result = run(real, DistillConfig(seed=seed), FeatureConfig())
        assert np.all(np.isfinite(result.log.cfd_values()))
        window_increase.append(stability_windows(result.log, window=500).max_relative_increase)
        np.testing.assert_allclose(result.synthetic.as_data().class_means(), real.class_means(), atol=0.5)
        for report in compare_sources(result.synthetic.as_data(), real, test, seeds=[seed]):
            accuracy[report.train_source].append(report.mean)
    elapsed = time.perf_counter() - started

    means = {source: float(np.mean(values)) for source, values in accuracy.items()}
    margin = 100.0 * (means["distilled"] - means["random-subset"])
    print(
        f"distilled {means['distilled']:.4f}, random-subset {means['random-subset']:.4f}, "
        f"full {means['full']:.4f}, margin {margin:+.2f} points, {elapsed:.0f} s for 5 seeds, "
        f"largest CFD window increase {100 * max(window_increase):.1f}%"
    )
    assert means["distilled"] >= 0.9 * means["full"]
    assert margin > 0.0
