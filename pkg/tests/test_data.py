import struct

import numpy as np
import pytest

from data import DataMatrix, DatasetSpec, generate, load, sample_batch
from errors import EXIT_IO, ArgumentError, ConfigError, DataParseError


def _idx_bytes(type_code, dims, payload: bytes) -> bytes:
    header = bytes([0, 0, type_code, len(dims)]) + b"".join(struct.pack(">I", d) for d in dims)
    return header + payload


class TestDataMatrix:
    def test_rejects_non_finite(self):
        with pytest.raises(ArgumentError):
            DataMatrix(np.array([[1.0, np.nan]]))

    def test_rejects_label_gap(self):
        with pytest.raises(ArgumentError, match="missing"):
            DataMatrix(np.zeros((3, 2)), np.array([0, 2, 2]))

    def test_class_values_unknown_class(self, three_blobs):
        with pytest.raises(LookupError):
            three_blobs.class_values(9)

    def test_class_means(self, three_blobs):
        means = three_blobs.class_means()
        assert means.shape == (3, 2)
        np.testing.assert_allclose(means, [[0, 0], [6, 0], [3, 5]], atol=0.5)


class TestGenerate:
    def test_gaussian_mixture_shape_and_labels(self, three_blobs):
        assert three_blobs.n == 180
        assert three_blobs.d == 2
        assert np.bincount(three_blobs.labels).tolist() == [60, 60, 60]

    def test_same_seed_is_identical(self):
        spec = DatasetSpec("gaussian-mixture", {"means": [[0.0], [3.0]]}, seed=11)
        a, b = generate(spec, 20), generate(spec, 20)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, generate(spec.with_seed(12), 20).values)

    def test_zero_scale_collapses_to_means(self):
        spec = DatasetSpec("gaussian-mixture", {"means": [[1.0, 2.0], [3.0, 4.0]], "scale": 0.0})
        data = generate(spec, 5)
        np.testing.assert_array_equal(data.class_values(1), np.tile([3.0, 4.0], (5, 1)))

    def test_negative_scale_rejected(self):
        spec = DatasetSpec("gaussian-mixture", {"means": [[0.0]], "scale": -1.0})
        with pytest.raises(ConfigError):
            generate(spec, 5)

    def test_two_moons(self):
        data = generate(DatasetSpec("two-moons", {"noise": 0.05}, seed=3), 40)
        assert data.n == 80 and data.n_classes == 2

    def test_rings_radius(self):
        data = generate(DatasetSpec("rings", {"n_rings": 2, "radius_step": 2.0, "noise": 0.0}), 30)
        radii = np.linalg.norm(data.class_values(1), axis=1)
        np.testing.assert_allclose(radii, 4.0)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            DatasetSpec("spirals")

    def test_n_per_class_must_be_positive(self):
        with pytest.raises(ConfigError):
            generate(DatasetSpec("two-moons"), 0)


class TestLoadCsv:
    def test_reads_values_and_labels(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1.5,2,0\n3,4,1\n5,6,1\n")
        data = load(path, "csv")
        np.testing.assert_array_equal(data.values, [[1.5, 2], [3, 4], [5, 6]])
        assert data.labels.tolist() == [0, 1, 1]

    def test_header_line(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x,y,label\n1,2,0\n")
        assert load(path, "csv", header=True).n == 1

    def test_ragged_row_cites_line(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,2,0\n3,1\n")
        with pytest.raises(DataParseError, match="line 2"):
            load(path, "csv")

    def test_non_numeric_cell_cites_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,2,0\n3,abc,1\n")
        with pytest.raises(DataParseError, match="line 2, column 2"):
            load(path, "csv")

    @pytest.mark.parametrize("cell", ["inf", "-inf"])
    def test_non_finite_cell_cites_line_and_column(self, tmp_path, cell):
        path = tmp_path / "d.csv"
        path.write_text(f"1,2,0\n3,{cell},1\n")
        with pytest.raises(DataParseError, match="line 2, column 2: non-finite") as info:
            load(path, "csv")
        assert info.value.exit_code == EXIT_IO

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataParseError, match="not found"):
            load(tmp_path / "nope.csv", "csv")

    def test_unlabeled(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,2\n3,4\n")
        data = load(path, "csv", has_labels=False)
        assert data.labels is None and data.d == 2


class TestLoadIdx:
    def test_images_and_labels(self, tmp_path):
        images = tmp_path / "images.idx"
        labels = tmp_path / "labels.idx"
        images.write_bytes(_idx_bytes(0x08, (2, 2, 2), bytes([0, 255, 51, 102, 0, 0, 0, 255])))
        labels.write_bytes(_idx_bytes(0x08, (2,), bytes([1, 0])))
        data = load(images, "idx", labels_path=labels)
        assert data.values.shape == (2, 4)
        np.testing.assert_allclose(data.values[0], [0.0, 1.0, 0.2, 0.4])
        assert data.labels.tolist() == [1, 0]

    def test_truncated_payload_cites_byte(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(_idx_bytes(0x08, (2, 2, 2), bytes(5)))
        with pytest.raises(DataParseError, match="byte 16"):
            load(path, "idx")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(bytes([1, 0, 8, 1, 0, 0, 0, 1, 0]))
        with pytest.raises(DataParseError, match="byte 0"):
            load(path, "idx")


class TestSampleBatch:
    def test_rows_come_from_the_class(self, three_blobs, rng):
        batch = sample_batch(three_blobs, 2, 100, rng)
        assert batch.n == 100 and batch.labels is None
        class_rows = {tuple(r) for r in three_blobs.class_values(2)}
        assert all(tuple(r) in class_rows for r in batch.values)

    def test_deterministic_for_seed(self, three_blobs):
        a = sample_batch(three_blobs, 0, 10, np.random.default_rng(5))
        b = sample_batch(three_blobs, 0, 10, np.random.default_rng(5))
        assert np.array_equal(a.values, b.values)

    def test_bad_size(self, three_blobs, rng):
        with pytest.raises(ArgumentError):
            sample_batch(three_blobs, 0, 0, rng)
