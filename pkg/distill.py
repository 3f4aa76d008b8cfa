"""
Minmax distillation: ascend the frequency sampler, descend the synthetic set
"""
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from charfn import DiscrepancyConfig, cfd_value_and_grad
from data import DataMatrix, sample_batch
from errors import ArgumentError, ConfigError, NumericError
from features import FeatureConfig, FeatureMap, build_feature_map
from freq_sampler import FreqSampler, spread_scale

logger = logging.getLogger(__name__)

INIT_STRATEGIES = ("random-real", "gaussian-noise")


@dataclass(frozen=True)
class DistillConfig:
    """Settings of the minmax loop; every field has a YAML key of the same name"""

    iterations: int = 2000
    ipc: int = 10
    q_freqs: int = 1024
    alpha: float = 0.5
    epsilon_sqrt: float = 1e-12
    lr_synth: float = 0.01
    lr_sampler: float = 0.01
    normalize_sampler_step: bool = True
    max_steps_per_iter: int = 1
    min_steps_per_iter: int = 1
    sampler_enabled: bool = True
    reblend_each_iter: bool = True
    resample_per_phase: bool = False
    shuffle_classes: bool = False
    batch_real: Optional[int] = 128
    init_strategy: str = "random-real"
    init_variance: float = 0.01
    n_components: Optional[int] = None
    init_scale: Optional[float] = None
    scale_spread: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    grad_clip: Optional[float] = None
    strict: bool = True
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        counts = {
            "iterations": self.iterations,
            "ipc": self.ipc,
            "q_freqs": self.q_freqs,
            "min_steps_per_iter": self.min_steps_per_iter,
            "log_every": self.log_every,
        }
        for name, value in counts.items():
            if value < 1:
                raise ConfigError(f"distill.{name} must be >= 1, got {value}")
        if self.max_steps_per_iter < 0:
            raise ConfigError(f"distill.max_steps_per_iter must be >= 0, got {self.max_steps_per_iter}")
        if self.batch_real is not None and self.batch_real < 1:
            raise ConfigError(f"distill.batch_real must be >= 1 or null, got {self.batch_real}")
        if self.lr_synth <= 0 or self.lr_sampler <= 0:
            raise ConfigError("distill learning rates must be > 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"distill.alpha must be in [0, 1], got {self.alpha}")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ConfigError(f"distill.init_strategy must be one of {INIT_STRATEGIES}, got {self.init_strategy!r}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError(f"distill.grad_clip must be > 0 or null, got {self.grad_clip}")
        if self.init_scale is not None and not self.init_scale > 0:
            raise ConfigError(f"distill.init_scale must be > 0 or null, got {self.init_scale}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"distill.seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def effective_max_steps(self) -> int:
        return self.max_steps_per_iter if self.sampler_enabled else 0

    def discrepancy(self) -> DiscrepancyConfig:
        return DiscrepancyConfig(alpha=self.alpha, epsilon_sqrt=self.epsilon_sqrt, strict=self.strict)


@dataclass(eq=False)
class AdamState:
    """Per-entry moment accumulators and a per-class step counter"""

    m: np.ndarray
    v: np.ndarray
    steps: np.ndarray

    @classmethod
    def zeros(cls, shape: Tuple[int, int], n_classes: int) -> "AdamState":
        return cls(m=np.zeros(shape), v=np.zeros(shape), steps=np.zeros(n_classes, dtype=np.int64))


@dataclass(eq=False)
class SyntheticSet:
    """The learnable distilled dataset: ipc rows per class plus optimizer state"""

    values: np.ndarray
    labels: np.ndarray
    ipc: int
    optimizer: AdamState
    provenance: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def class_mask(self, class_id: int) -> np.ndarray:
        mask = self.labels == class_id
        if not mask.any():
            raise LookupError(f"class {class_id} not present in the synthetic set")
        return mask

    def as_data(self) -> DataMatrix:
        return DataMatrix(self.values, self.labels)


@dataclass(frozen=True)
class StepRecord:
    """One log line: the state after processing one class in one iteration"""

    iteration: int
    class_id: int
    cfd: float
    amp_term: float
    phase_term: float
    scale_norm: float
    beta: float
    update_norm: float
    wall_clock: float


class TrainLog:
    """Ordered step records with CSV export"""

    def __init__(self, records: Optional[List[StepRecord]] = None):
        self.records: List[StepRecord] = list(records or [])

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: StepRecord):
        self.records.append(record)

    def cfd_values(self) -> np.ndarray:
        return np.array([r.cfd for r in self.records])

    def to_frame(self) -> pd.DataFrame:
        columns = list(StepRecord.__dataclass_fields__)
        return pd.DataFrame([asdict(r) for r in self.records], columns=columns)

    def to_csv(self, path: Path):
        self.to_frame().to_csv(path, index=False)


@dataclass(eq=False)
class RunResult:
    synthetic: SyntheticSet
    log: TrainLog
    sampler: FreqSampler
    feature_map: FeatureMap
    checkpoint_path: Optional[Path] = None


def init_synthetic(
    real: DataMatrix,
    ipc: int,
    strategy: str,
    rng: np.random.Generator,
    variance: float = 0.01,
) -> SyntheticSet:
    """
    Initialize ipc synthetic rows per class

    Args:
        real: Labeled real data
        ipc: Rows per class
        strategy: "random-real" copies real rows (distinct when the class is large
            enough, with replacement otherwise); "gaussian-noise" draws N(class mean, variance * I)
        rng: Caller-owned generator
        variance: Noise variance of the gaussian-noise strategy
    """
    if real.labels is None:
        raise ArgumentError("synthetic initialization needs labeled real data")
    if strategy not in INIT_STRATEGIES:
        raise ArgumentError(f"strategy must be one of {INIT_STRATEGIES}, got {strategy!r}")
    if ipc < 1:
        raise ArgumentError(f"ipc must be >= 1, got {ipc}")

    blocks = []
    for c in range(real.n_classes):
        rows = real.values[real.labels == c]
        if rows.shape[0] == 0:
            raise ArgumentError(f"class {c} has no real samples")
        if strategy == "random-real":
            picks = rng.choice(rows.shape[0], size=ipc, replace=rows.shape[0] < ipc)
            blocks.append(rows[picks].copy())
        else:
            noise = rng.standard_normal((ipc, real.d))
            blocks.append(rows.mean(axis=0) + np.sqrt(variance) * noise)

    values = np.concatenate(blocks)
    labels = np.repeat(np.arange(real.n_classes), ipc)
    return SyntheticSet(
        values=values,
        labels=labels,
        ipc=ipc,
        optimizer=AdamState.zeros(values.shape, real.n_classes),
        provenance={"init_strategy": strategy, "real_rows": real.n},
    )


def _require_finite(value, what: str, iteration: int, class_id: int):
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite {what} at iteration {iteration}, class {class_id}")


def adam_update(
    synth: SyntheticSet,
    class_id: int,
    grad: np.ndarray,
    config: DistillConfig,
    iteration: int = 0,
) -> Tuple[SyntheticSet, float]:
    """
    Adam step with decoupled weight decay on the rows of one class

    Returns:
        (updated set, norm of the applied update)
    """
    mask = synth.class_mask(class_id)
    state = synth.optimizer
    m, v, steps = state.m.copy(), state.v.copy(), state.steps.copy()
    steps[class_id] += 1
    t = steps[class_id]

    m[mask] = config.beta1 * m[mask] + (1.0 - config.beta1) * grad
    v[mask] = config.beta2 * v[mask] + (1.0 - config.beta2) * grad * grad
    m_hat = m[mask] / (1.0 - config.beta1 ** t)
    v_hat = v[mask] / (1.0 - config.beta2 ** t)
    update = config.lr_synth * (m_hat / (np.sqrt(v_hat) + config.adam_eps) + config.weight_decay * synth.values[mask])

    values = synth.values.copy()
    values[mask] = synth.values[mask] - update
    if not np.all(np.isfinite(values[mask])):
        raise NumericError(f"update rejected: non-finite synthetic values at iteration {iteration}, class {class_id}")
    updated = replace(synth, values=values, optimizer=AdamState(m=m, v=v, steps=steps))
    return updated, float(np.linalg.norm(update))


def distill_step(
    synth: SyntheticSet,
    real: DataMatrix,
    feature_map: FeatureMap,
    sampler: FreqSampler,
    config: DistillConfig,
    class_id: int,
    rng: np.random.Generator,
    iteration: int = 0,
) -> Tuple[SyntheticSet, FreqSampler, StepRecord]:
    """
    One minmax step on one class

    Reblends the feature map, draws a real batch and q frequencies, ascends the
    sampler on the frozen draw, then descends the synthetic rows of the class.

    Returns:
        (updated synthetic set, updated sampler, log record)
    """
    started = time.perf_counter()
    discrepancy = config.discrepancy()
    fmap = feature_map.reblend(rng) if config.reblend_each_iter else feature_map

    if config.batch_real is None:
        real_batch = real.class_values(class_id)
    else:
        real_batch = sample_batch(real, class_id, config.batch_real, rng).values
    mask = synth.class_mask(class_id)
    real_feat = fmap.forward(real_batch)

    sampler = replace(sampler)
    sampler.sample_freqs(config.q_freqs, rng)
    draw = sampler.last_draw

    synth_feat = fmap.forward(synth.values[mask])
    for _ in range(config.effective_max_steps):
        sampler.last_draw = draw
        freqs = sampler.reparameterize(draw)
        loss, _, grad_freqs = cfd_value_and_grad(real_feat, synth_feat, freqs, discrepancy)
        _require_finite(grad_freqs, "sampler gradient", iteration, class_id)
        sampler = sampler.max_step(grad_freqs, config.lr_sampler, config.normalize_sampler_step)

    if config.resample_per_phase:
        min_freqs = sampler.sample_freqs(config.q_freqs, rng)
    else:
        min_freqs = sampler.reparameterize(draw)

    update_norm = 0.0
    for _ in range(config.min_steps_per_iter):
        synth_rows = synth.values[mask]
        loss, grad_feat, _ = cfd_value_and_grad(
            real_feat, fmap.forward(synth_rows), min_freqs, discrepancy, freq_grad=False
        )
        _require_finite(loss.total, "loss", iteration, class_id)
        grad = fmap.vjp(synth_rows, grad_feat)
        _require_finite(grad, "synthetic gradient", iteration, class_id)
        if config.grad_clip is not None:
            norm = np.linalg.norm(grad)
            if norm > config.grad_clip:
                grad = grad * (config.grad_clip / norm)
        synth, update_norm = adam_update(synth, class_id, grad, config, iteration)

    record = StepRecord(
        iteration=iteration,
        class_id=int(class_id),
        cfd=loss.total,
        amp_term=loss.amp_term,
        phase_term=loss.phase_term,
        scale_norm=sampler.scale_norm(),
        beta=fmap.beta,
        update_norm=update_norm,
        wall_clock=time.perf_counter() - started,
    )
    return synth, replace(sampler, last_draw=None), record


def run(
    real: DataMatrix,
    config: DistillConfig,
    feature_config: FeatureConfig = FeatureConfig(),
    out_dir: Optional[Path] = None,
    feature_map: Optional[FeatureMap] = None,
    config_text: str = "",
) -> RunResult:
    """
    Distill real data into ipc synthetic rows per class

    Each iteration visits every class once (round-robin, or shuffled per
    iteration when shuffle_classes is set).

    Args:
        real: Labeled real data
        config: Minmax loop settings
        feature_config: How to build the feature map when none is given
        out_dir: When set, the checkpoint and train log are written here
        feature_map: Prebuilt map (skips building and pretraining)
        config_text: Raw config echoed into the checkpoint

    Returns:
        RunResult with the synthetic set, log, final sampler and feature map
    """
    if real.labels is None:
        raise ArgumentError("distillation needs labeled real data")
    rng = np.random.default_rng(config.seed)
    if feature_map is None:
        feature_map = build_feature_map(feature_config, real, rng)
    synth = init_synthetic(real, config.ipc, config.init_strategy, rng, config.init_variance)
    init_scale = config.init_scale
    if init_scale is None:
        init_scale = spread_scale(feature_map.forward(real.values), real.labels)
    sampler = FreqSampler.create(
        feature_map.out_dim, config.q_freqs, config.n_components, init_scale, config.scale_spread
    )
    logger.info(
        "Distilling %d classes x %d ipc for %d iterations (q=%d, K=%d, scale %.4f, alpha=%.3f, sampler %s)",
        real.n_classes, config.ipc, config.iterations, config.q_freqs, sampler.n_components,
        init_scale, config.alpha, "on" if config.effective_max_steps else "off",
    )

    log = TrainLog()
    classes = np.arange(real.n_classes)
    for iteration in range(config.iterations):
        order = rng.permutation(classes) if config.shuffle_classes else classes
        for class_id in order:
            synth, sampler, record = distill_step(
                synth, real, feature_map, sampler, config, int(class_id), rng, iteration
            )
            log.append(record)
        if (iteration + 1) % config.log_every == 0:
            recent = log.cfd_values()[-config.log_every * len(classes):]
            logger.info("iteration %d: mean CFD %.5f, scale norm %.4f", iteration + 1, recent.mean(), sampler.scale_norm())

    result = RunResult(synthetic=synth, log=log, sampler=sampler, feature_map=feature_map)
    if out_dir is not None:
        from checkpoint import save_checkpoint

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.checkpoint_path = save_checkpoint(
            out_dir / "checkpoint.ncfm.json", synth, sampler, feature_map, config, feature_config, config_text
        )
        log.to_csv(out_dir / "train_log.csv")
        logger.info("Wrote %s and train_log.csv", result.checkpoint_path)
    return result
