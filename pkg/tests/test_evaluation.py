import numpy as np
import pytest

from data import DataMatrix, DatasetSpec, generate
from errors import ArgumentError
from evaluation import (
    compare_sources,
    complexity_bench,
    evaluate,
    metric_axiom_suite,
    random_subset,
    reports_frame,
)


def test_memorization_with_one_nearest_neighbor():
    data = DataMatrix(np.array([[0.0, 0.0], [5.0, 5.0], [9.0, 0.0]]), np.array([0, 1, 2]))
    report = evaluate(data, data, "one-nearest-neighbor", seeds=[0, 1])
    assert report.accuracies == [1.0, 1.0]
    assert report.mean == 1.0 and report.std == 0.0


def test_logistic_on_separable_data():
    spec = DatasetSpec("gaussian-mixture", {"means": [[-4.0, 0.0], [4.0, 0.0]], "scale": 1.0}, seed=3)
    report = evaluate(generate(spec, 200), generate(spec.with_seed(4), 200))
    assert report.mean > 0.95


def test_random_labels_are_near_chance():
    rng = np.random.default_rng(0)
    train = DataMatrix(rng.normal(size=(300, 2)), np.repeat([0, 1, 2], 100))
    test = DataMatrix(rng.normal(size=(900, 2)), rng.permutation(np.repeat([0, 1, 2], 300)))
    accuracy = evaluate(train, test).mean
    bound = 3 * np.sqrt((1 / 3) * (2 / 3) / 900)
    assert abs(accuracy - 1 / 3) < bound


def test_class_absent_from_train():
    train = DataMatrix(np.zeros((2, 1)), np.array([0, 0]))
    test = DataMatrix(np.zeros((2, 1)), np.array([0, 1]))
    with pytest.raises(ArgumentError, match="absent"):
        evaluate(train, test)


def test_rejects_unknown_classifier(three_blobs):
    with pytest.raises(ArgumentError):
        evaluate(three_blobs, three_blobs, "svm")


def test_evaluation_is_deterministic(three_blobs):
    a = evaluate(three_blobs, three_blobs, seeds=[3])
    b = evaluate(three_blobs, three_blobs, seeds=[3])
    assert a.accuracies == b.accuracies


def test_random_subset_sizes(three_blobs, rng):
    subset = random_subset(three_blobs, 7, rng)
    assert np.bincount(subset.labels).tolist() == [7, 7, 7]


def test_compare_sources_reports_three_sources(three_blobs):
    distilled = DataMatrix(three_blobs.class_means(), np.arange(3))
    reports = compare_sources(distilled, three_blobs, three_blobs, seeds=[0, 1])
    assert [r.train_source for r in reports] == ["distilled", "random-subset", "full"]
    frame = reports_frame(reports)
    assert len(frame) == 6
    assert frame["test_accuracy"].between(0, 1).all()


class TestAxiomSuite:
    def test_random_triples(self):
        report = metric_axiom_suite(trials=200, seed=1)
        assert report.passed, report.failures
        assert report.worst_asymmetry == 0.0

    def test_identical_triple(self):
        report = metric_axiom_suite(lambda rng, dim: np.linspace(-1.0, 1.0, 2 * dim).reshape(2, dim), trials=5)
        assert report.passed

    def test_single_points(self):
        report = metric_axiom_suite(lambda rng, dim: rng.normal(size=(1, dim)), trials=50, seed=2)
        assert report.passed

    def test_needs_a_trial(self):
        with pytest.raises(ArgumentError):
            metric_axiom_suite(trials=0)


class TestComplexityBench:
    def test_size_grid_validation(self):
        with pytest.raises(ArgumentError, match="strictly increasing"):
            complexity_bench(sizes=[100, 50, 10000], mmd_sizes=[10, 1000])
        with pytest.raises(ArgumentError, match="orders of magnitude"):
            complexity_bench(sizes=[100, 200], mmd_sizes=[10, 1000])

    def test_small_grid_reports(self):
        cfd_report, mmd_report = complexity_bench(
            sizes=[200, 2000, 20000], q=32, repeats=2, mmd_sizes=[50, 500, 2000], dim=2
        )
        assert cfd_report.method == "cfd" and mmd_report.method == "mmd-quadratic"
        assert all(t > 0 for t in cfd_report.times + mmd_report.times)
        assert mmd_report.slope > cfd_report.slope

    @pytest.mark.slow
    def test_linear_versus_quadratic_slopes(self):
        cfd_report, mmd_report = complexity_bench(repeats=3)
        assert cfd_report.slope == pytest.approx(1.0, abs=0.15)
        assert mmd_report.slope == pytest.approx(2.0, abs=0.2)

    @pytest.mark.slow
    def test_slopes_agree_across_repeat_counts(self):
        once = complexity_bench(repeats=1)
        five = complexity_bench(repeats=5)
        for single, median in zip(once, five):
            assert single.method == median.method
            assert single.slope == pytest.approx(median.slope, abs=0.1)
