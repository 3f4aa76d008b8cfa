"""
Downstream evaluation, metric-axiom harness and complexity benchmark
"""
import logging
import time
import timeit
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import linregress
from sklearn.linear_model import LogisticRegression
from sklearn.neighbors import KNeighborsClassifier

from baselines import KernelSpec, mmd_squared
from charfn import DiscrepancyConfig, cfd, empirical_cf
from data import DataMatrix
from errors import ArgumentError

logger = logging.getLogger(__name__)

CLASSIFIERS = ("multinomial-logistic", "one-nearest-neighbor")
TRAIN_SOURCES = ("distilled", "random-subset", "full")
AXIOM_SLACK = 1e-9


@dataclass(frozen=True)
class EvalReport:
    """Test accuracy of one training source and classifier across seeds"""

    train_source: str
    classifier: str
    seeds: List[int]
    accuracies: List[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "train_source": self.train_source,
            "classifier": self.classifier,
            "seed": self.seeds,
            "test_accuracy": self.accuracies,
        })


@dataclass(frozen=True)
class BenchReport:
    """Median wall-clock time per evaluation over a size grid, with its log-log slope"""

    method: str
    sizes: List[int]
    times: List[float]
    slope: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"method": self.method, "n": self.sizes, "seconds": self.times, "slope": self.slope})


@dataclass
class AxiomReport:
    """Worst observed violation of each metric axiom"""

    trials: int
    slack: float = AXIOM_SLACK
    worst_negativity: float = 0.0
    worst_asymmetry: float = 0.0
    worst_triangle: float = 0.0
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def _make_classifier(kind: str, seed: int):
    if kind == "multinomial-logistic":
        return LogisticRegression(max_iter=1000, random_state=seed)
    if kind == "one-nearest-neighbor":
        return KNeighborsClassifier(n_neighbors=1)
    raise ArgumentError(f"classifier must be one of {CLASSIFIERS}, got {kind!r}")


def _check_eval_pair(train: DataMatrix, test: DataMatrix):
    if train.labels is None or test.labels is None:
        raise ArgumentError("evaluation needs labeled train and test data")
    if train.d != test.d:
        raise ArgumentError(f"train has {train.d} columns but test has {test.d}")
    missing = sorted(set(np.unique(test.labels)) - set(np.unique(train.labels)))
    if missing:
        raise ArgumentError(f"test classes {missing} are absent from the training data")


def _accuracy(train: DataMatrix, test: DataMatrix, classifier: str, seed: int) -> float:
    model = _make_classifier(classifier, seed)
    if np.unique(train.labels).size == 1:
        # sklearn's logistic regression refuses a single class; every prediction is that class
        return float(np.mean(test.labels == train.labels[0]))
    model.fit(train.values, train.labels)
    return float(np.mean(model.predict(test.values) == test.labels))


def evaluate(
    train: DataMatrix,
    test: DataMatrix,
    classifier: str = "multinomial-logistic",
    seeds: Sequence[int] = (0,),
    train_source: str = "distilled",
) -> EvalReport:
    """
    Train a simple classifier on train and report its test accuracy per seed

    Args:
        train: Labeled training data
        test: Labeled test data with the same columns
        classifier: "multinomial-logistic" or "one-nearest-neighbor"
        seeds: One accuracy is reported per seed
        train_source: Label recorded in the report

    Returns:
        EvalReport
    """
    if classifier not in CLASSIFIERS:
        raise ArgumentError(f"classifier must be one of {CLASSIFIERS}, got {classifier!r}")
    if train_source not in TRAIN_SOURCES:
        raise ArgumentError(f"train_source must be one of {TRAIN_SOURCES}, got {train_source!r}")
    _check_eval_pair(train, test)
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ArgumentError("at least one seed is required")
    return EvalReport(train_source, classifier, seeds, [_accuracy(train, test, classifier, s) for s in seeds])


def random_subset(real: DataMatrix, per_class: int, rng: np.random.Generator) -> DataMatrix:
    """Equal-size baseline: per_class distinct real rows per class (all rows if the class is smaller)"""
    picks = []
    for c in range(real.n_classes):
        idx = np.flatnonzero(real.labels == c)
        picks.append(rng.choice(idx, size=min(per_class, idx.size), replace=False))
    picks = np.concatenate(picks)
    return DataMatrix(real.values[picks], real.labels[picks])


def compare_sources(
    distilled: DataMatrix,
    real_train: DataMatrix,
    test: DataMatrix,
    classifier: str = "multinomial-logistic",
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
) -> List[EvalReport]:
    """
    Evaluate the distilled set against an equal-size random real subset and the full training data

    The random subset is redrawn per seed.
    """
    ipc = int(np.bincount(distilled.labels).max())
    subset_acc = []
    for seed in seeds:
        subset = random_subset(real_train, ipc, np.random.default_rng(seed))
        subset_acc.append(evaluate(subset, test, classifier, [seed], "random-subset").accuracies[0])
    return [
        evaluate(distilled, test, classifier, seeds, "distilled"),
        EvalReport("random-subset", classifier, [int(s) for s in seeds], subset_acc),
        evaluate(real_train, test, classifier, seeds, "full"),
    ]


def reports_frame(reports: Sequence) -> pd.DataFrame:
    return pd.concat([r.to_frame() for r in reports], ignore_index=True)


def default_dataset_sampler(rng: np.random.Generator, dim: int) -> np.ndarray:
    """A small random point cloud: 1..20 rows in dim columns at a random offset and scale"""
    n = int(rng.integers(1, 21))
    return rng.normal(rng.normal(0.0, 1.0, dim), rng.uniform(0.1, 2.0), size=(n, dim))


def metric_axiom_suite(
    dataset_sampler: Callable[[np.random.Generator, int], np.ndarray] = default_dataset_sampler,
    trials: int = 1000,
    seed: int = 0,
    q: int = 64,
    max_dim: int = 4,
    epsilon_sqrt: float = 1e-12,
) -> AxiomReport:
    """
    Check non-negativity, exact symmetry and the triangle inequality of the alpha = 0.5 CFD

    Each trial draws a dimension, three datasets from dataset_sampler and one
    shared frequency set.
    """
    if trials < 1:
        raise ArgumentError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    config = DiscrepancyConfig(alpha=0.5, epsilon_sqrt=epsilon_sqrt)
    report = AxiomReport(trials=trials)

    for trial in range(trials):
        dim = int(rng.integers(1, max_dim + 1))
        p, q_set, r = (dataset_sampler(rng, dim) for _ in range(3))
        freqs = rng.standard_normal((q, dim))
        cf_p, cf_q, cf_r = (empirical_cf(x, freqs) for x in (p, q_set, r))

        d_pq = cfd(cf_p, cf_q, config).total
        d_qp = cfd(cf_q, cf_p, config).total
        d_qr = cfd(cf_q, cf_r, config).total
        d_pr = cfd(cf_p, cf_r, config).total

        negativity = max(0.0, -min(d_pq, d_qr, d_pr))
        asymmetry = abs(d_pq - d_qp)
        triangle = max(0.0, d_pr - (d_pq + d_qr))
        report.worst_negativity = max(report.worst_negativity, negativity)
        report.worst_asymmetry = max(report.worst_asymmetry, asymmetry)
        report.worst_triangle = max(report.worst_triangle, triangle)

        if negativity > 0.0:
            report.failures.append(f"trial {trial}: negative CFD {-negativity:.3e}")
        if asymmetry != 0.0:
            report.failures.append(f"trial {trial}: asymmetry {asymmetry:.3e}")
        if triangle > report.slack:
            report.failures.append(f"trial {trial}: triangle violated by {triangle:.3e}")

    logger.info(
        "Axiom suite: %d trials, worst triangle violation %.3e, %d failures",
        trials, report.worst_triangle, len(report.failures),
    )
    return report


def _median_time(func: Callable[[], object], repeats: int) -> float:
    return float(np.median(timeit.Timer(func).repeat(repeat=repeats, number=1)))


def _fit_slope(sizes: Sequence[int], times: Sequence[float]) -> float:
    return float(linregress(np.log(sizes), np.log(times)).slope)


def _bench_method(
    method: str,
    sizes: Sequence[int],
    make_call: Callable[[int], Callable[[], object]],
    repeats: int,
) -> BenchReport:
    sizes = [int(n) for n in sizes]
    if len(sizes) < 2 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ArgumentError(f"{method} sizes must be strictly increasing with at least two entries, got {sizes}")
    if np.log10(sizes[-1] / sizes[0]) < 1.5:
        raise ArgumentError(f"{method} sizes must span at least 1.5 orders of magnitude, got {sizes}")

    floor = 100 * time.get_clock_info("perf_counter").resolution
    kept_sizes, times = [], []
    for n in sizes:
        elapsed = _median_time(make_call(n), repeats)
        if elapsed <= floor:
            logger.warning("%s at n=%d took %.2e s, below timer resolution; size dropped", method, n, elapsed)
            continue
        kept_sizes.append(n)
        times.append(elapsed)
        logger.info("%s n=%d: %.4f s", method, n, elapsed)
    if len(kept_sizes) < 2:
        raise ArgumentError(f"{method}: fewer than two sizes were measurable")
    return BenchReport(method, kept_sizes, times, _fit_slope(kept_sizes, times))


def complexity_bench(
    sizes: Sequence[int] = (1000, 3000, 10000, 30000, 100000),
    q: int = 256,
    repeats: int = 3,
    mmd_sizes: Optional[Sequence[int]] = (100, 300, 1000, 3000),
    dim: int = 8,
    seed: int = 0,
) -> Tuple[BenchReport, BenchReport]:
    """
    Time the CFD at fixed q and the exact MMD over growing sample counts

    Both methods run in strict sequential mode. Sizes whose median time is
    below the timer resolution are dropped with a warning.

    Returns:
        (cfd report, mmd report)
    """
    if q < 1 or repeats < 1:
        raise ArgumentError("q and repeats must be >= 1")
    rng = np.random.default_rng(seed)
    freqs = rng.standard_normal((q, dim))
    config = DiscrepancyConfig(strict=True)
    pool = rng.standard_normal((2 * max(max(sizes), max(mmd_sizes or sizes)), dim))

    def cfd_call(n: int):
        x, y = pool[:n], pool[n:2 * n]
        return lambda: cfd(empirical_cf(x, freqs, strict=True), empirical_cf(y, freqs, strict=True), config)

    def mmd_call(n: int):
        x, y = pool[:n], pool[n:2 * n]
        kernel = KernelSpec("gaussian", 1.0)
        return lambda: mmd_squared(x, y, kernel)

    cfd_report = _bench_method("cfd", sizes, cfd_call, repeats)
    mmd_report = _bench_method("mmd-quadratic", mmd_sizes or sizes, mmd_call, repeats)
    return cfd_report, mmd_report
