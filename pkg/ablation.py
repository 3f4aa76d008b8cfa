"""
Ablations over the sampler, the amplitude/phase blend and the frequency count,
plus the training-stability check on a run's CFD log
"""
import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Sequence

import numpy as np
import pandas as pd

from data import DataMatrix
from distill import DistillConfig, TrainLog, run
from errors import ArgumentError
from evaluation import evaluate
from features import FeatureConfig

logger = logging.getLogger(__name__)

ABLATION_AXES = {
    "sampler": ("sampler_enabled", bool),
    "alpha": ("alpha", float),
    "q": ("q_freqs", int),
}


@dataclass(frozen=True)
class StabilityReport:
    window: int
    window_means: List[float]
    max_relative_increase: float
    all_finite: bool

    def stable(self, tolerance: float = 0.10) -> bool:
        return self.all_finite and self.max_relative_increase <= tolerance


def stability_windows(log: TrainLog, window: int = 500) -> StabilityReport:
    """
    Mean CFD over consecutive non-overlapping windows of `window` iterations

    Per-iteration values average the records of every class visited in that
    iteration. A trailing partial window is ignored.
    """
    if window < 1:
        raise ArgumentError(f"window must be >= 1, got {window}")
    frame = log.to_frame()
    if frame.empty:
        raise ArgumentError("the train log is empty")
    all_finite = bool(np.all(np.isfinite(frame["cfd"].to_numpy())))
    per_iteration = frame.groupby("iteration")["cfd"].mean().to_numpy()
    n_windows = per_iteration.size // window
    means = [float(per_iteration[i * window:(i + 1) * window].mean()) for i in range(n_windows)]
    increases = [(b - a) / a for a, b in zip(means, means[1:]) if a > 0]
    return StabilityReport(window, means, max(increases, default=0.0), all_finite)


def run_ablation(
    real: DataMatrix,
    test: DataMatrix,
    base: DistillConfig,
    feature_config: FeatureConfig,
    axis: str,
    values: Sequence[Any],
    seeds: Sequence[int],
    classifier: str = "multinomial-logistic",
) -> pd.DataFrame:
    """
    Distill and evaluate once per (value, seed)

    Returns:
        One row per run with columns axis, value, seed, test_accuracy
    """
    if axis not in ABLATION_AXES:
        raise ArgumentError(f"axis must be one of {sorted(ABLATION_AXES)}, got {axis!r}")
    if not values or not seeds:
        raise ArgumentError("ablation needs at least one value and one seed")
    field_name, cast = ABLATION_AXES[axis]

    rows: List[Dict[str, Any]] = []
    for value in values:
        for seed in seeds:
            config = replace(base, seed=int(seed), **{field_name: cast(value)})
            result = run(real, config, feature_config)
            report = evaluate(result.synthetic.as_data(), test, classifier, [int(seed)])
            rows.append({"axis": axis, "value": cast(value), "seed": int(seed), "test_accuracy": report.accuracies[0]})
            logger.info("%s=%s seed %d: accuracy %.4f", axis, value, seed, report.accuracies[0])
    return pd.DataFrame(rows)


def summarize(runs: pd.DataFrame) -> pd.DataFrame:
    """
    Mean and spread per value, with the effect against the first value

    effect_points is the accuracy difference in percentage points; effect_size
    divides the difference by the pooled standard deviation (0 when both spreads are 0).
    """
    order = list(dict.fromkeys(runs["value"].tolist()))
    grouped = runs.groupby("value", sort=False)["test_accuracy"]
    summary = pd.DataFrame({"mean": grouped.mean(), "std": grouped.std(ddof=0)}).reindex(order)
    ref_mean, ref_std = summary["mean"].iloc[0], summary["std"].iloc[0]
    pooled = np.sqrt((summary["std"] ** 2 + ref_std ** 2) / 2.0)
    summary["effect_points"] = 100.0 * (summary["mean"] - ref_mean)
    summary["effect_size"] = np.where(pooled > 0, (summary["mean"] - ref_mean) / pooled.where(pooled > 0, 1.0), 0.0)
    summary.insert(0, "axis", runs["axis"].iloc[0])
    return summary.reset_index()
