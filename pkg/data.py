"""
Benchmark data: synthetic generators, CSV / IDX ingestion and seeded batch sampling
"""
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd
from sklearn.datasets import make_moons

from errors import ArgumentError, ConfigError, DataParseError

logger = logging.getLogger(__name__)

DATASET_KINDS = ("gaussian-mixture", "two-moons", "rings", "csv-file", "idx-image-file")

# IDX type byte -> big-endian numpy dtype
IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """An n x d table of real samples with optional integer class labels"""

    values: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ArgumentError(f"DataMatrix needs an n x d array with n, d >= 1, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ArgumentError("DataMatrix values must be finite")
        object.__setattr__(self, "values", values)

        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.ndim != 1 or labels.shape[0] != values.shape[0]:
                raise ArgumentError(
                    f"labels must be a vector of length {values.shape[0]}, got shape {labels.shape}"
                )
            if labels.size and not np.issubdtype(labels.dtype, np.integer):
                if not np.all(np.equal(np.mod(labels, 1), 0)):
                    raise ArgumentError("labels must be integers")
            labels = labels.astype(np.int64)
            if labels.min() < 0:
                raise ArgumentError("class ids must be non-negative")
            missing = np.setdiff1d(np.arange(labels.max() + 1), labels)
            if missing.size:
                raise ArgumentError(f"class ids must cover 0..C-1; missing {missing.tolist()}")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def n_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1

    def class_values(self, class_id: int) -> np.ndarray:
        """Rows belonging to one class"""
        if self.labels is None:
            raise ArgumentError("data is unlabeled")
        rows = self.values[self.labels == class_id]
        if rows.shape[0] == 0:
            raise LookupError(f"class {class_id} not present (classes 0..{self.n_classes - 1})")
        return rows

    def class_means(self) -> np.ndarray:
        """C x d matrix of per-class means"""
        return np.stack([self.class_values(c).mean(axis=0) for c in range(self.n_classes)])


@dataclass(frozen=True, eq=False)
class DatasetSpec:
    """What to generate or load, plus the seed it is generated with"""

    kind: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"dataset kind must be one of {DATASET_KINDS}, got {self.kind!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def with_seed(self, seed: int) -> "DatasetSpec":
        return replace(self, seed=seed)


def _legacy_seed(seed: int) -> int:
    """32-bit seed for APIs that only accept RandomState-compatible seeds"""
    return int(np.random.SeedSequence(int(seed)).generate_state(1)[0])


def _gaussian_mixture(params: Dict[str, Any], n_per_class: int, rng: np.random.Generator) -> DataMatrix:
    if "means" not in params:
        raise ConfigError("gaussian-mixture needs 'means' (one vector per class)")
    means = np.atleast_2d(np.asarray(params["means"], dtype=np.float64))
    n_classes, dim = means.shape

    covariances = params.get("covariances")
    if covariances is not None:
        covariances = np.asarray(covariances, dtype=np.float64)
        if covariances.shape != (n_classes, dim, dim):
            raise ConfigError(
                f"covariances must have shape {(n_classes, dim, dim)}, got {covariances.shape}"
            )
        factors = []
        for c, cov in enumerate(covariances):
            if not np.allclose(cov, cov.T):
                raise ConfigError(f"covariance of class {c} is not symmetric")
            eigvals, eigvecs = np.linalg.eigh(cov)
            if eigvals.min() < -1e-12:
                raise ConfigError(f"covariance of class {c} is not positive semi-definite")
            factors.append(eigvecs * np.sqrt(np.clip(eigvals, 0.0, None)))
    else:
        scale = np.broadcast_to(np.asarray(params.get("scale", 1.0), dtype=np.float64), (n_classes,))
        if np.any(scale < 0) or not np.all(np.isfinite(scale)):
            raise ConfigError(f"gaussian-mixture scales must be finite and non-negative, got {scale.tolist()}")
        factors = [s * np.eye(dim) for s in scale]

    values = np.empty((n_classes * n_per_class, dim))
    for c in range(n_classes):
        noise = rng.standard_normal((n_per_class, dim))
        values[c * n_per_class:(c + 1) * n_per_class] = means[c] + noise @ factors[c].T
    labels = np.repeat(np.arange(n_classes), n_per_class)
    return DataMatrix(values, labels)


def _two_moons(params: Dict[str, Any], n_per_class: int, seed: int) -> DataMatrix:
    noise = float(params.get("noise", 0.1))
    if noise < 0:
        raise ConfigError(f"two-moons noise must be non-negative, got {noise}")
    values, labels = make_moons(
        n_samples=(n_per_class, n_per_class),
        shuffle=False,
        noise=noise,
        random_state=np.random.RandomState(_legacy_seed(seed)),
    )
    return DataMatrix(values, labels)


def _rings(params: Dict[str, Any], n_per_class: int, rng: np.random.Generator) -> DataMatrix:
    n_rings = int(params.get("n_rings", 2))
    radius_step = float(params.get("radius_step", 1.0))
    noise = float(params.get("noise", 0.05))
    if n_rings < 1 or radius_step <= 0 or noise < 0:
        raise ConfigError(
            f"rings needs n_rings >= 1, radius_step > 0, noise >= 0; got {n_rings}, {radius_step}, {noise}"
        )
    blocks = []
    for c in range(n_rings):
        angles = rng.uniform(0.0, 2.0 * np.pi, n_per_class)
        radius = (c + 1) * radius_step
        ring = radius * np.column_stack([np.cos(angles), np.sin(angles)])
        blocks.append(ring + noise * rng.standard_normal(ring.shape))
    return DataMatrix(np.concatenate(blocks), np.repeat(np.arange(n_rings), n_per_class))


def generate(spec: DatasetSpec, n_per_class: int) -> DataMatrix:
    """
    Generate a labeled benchmark dataset

    Args:
        spec: Dataset kind, kind-specific parameters and seed
        n_per_class: Rows generated per class

    Returns:
        Labeled DataMatrix with exactly n_per_class rows per class, ordered by class
    """
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = np.random.default_rng(int(spec.seed))

    if spec.kind == "gaussian-mixture":
        return _gaussian_mixture(spec.parameters, n_per_class, rng)
    if spec.kind == "two-moons":
        return _two_moons(spec.parameters, n_per_class, spec.seed)
    if spec.kind == "rings":
        return _rings(spec.parameters, n_per_class, rng)

    # File-backed kinds are loaded, then n_per_class rows per class are drawn
    path = spec.parameters.get("path")
    if not path:
        raise ConfigError(f"{spec.kind} needs a 'path' parameter")
    if spec.kind == "csv-file":
        loaded = load(path, "csv", header=bool(spec.parameters.get("header", False)))
    else:
        loaded = load(path, "idx", labels_path=spec.parameters.get("labels_path"))
    if loaded.labels is None:
        raise ConfigError(f"{spec.kind} at {path} has no labels")
    blocks = [
        sample_batch(loaded, c, n_per_class, rng).values for c in range(loaded.n_classes)
    ]
    return DataMatrix(np.concatenate(blocks), np.repeat(np.arange(loaded.n_classes), n_per_class))


def _load_csv(path: Path, header: bool, has_labels: bool) -> DataMatrix:
    try:
        frame = pd.read_csv(path, header=0 if header else None, dtype=str, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise DataParseError(f"{path}: file is empty")
    except pd.errors.ParserError as e:
        raise DataParseError(f"{path}: ragged or malformed row: {e}")

    line_offset = 2 if header else 1
    missing = frame.isna().to_numpy()
    if missing.any():
        row, col = np.argwhere(missing)[0]
        raise DataParseError(f"{path}: line {row + line_offset}, column {col + 1}: missing value (ragged row)")

    numeric = frame.apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce"))
    table = numeric.to_numpy(dtype=np.float64)
    bad = ~np.isfinite(table)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        kind = "non-numeric" if numeric.isna().iat[row, col] else "non-finite"
        raise DataParseError(
            f"{path}: line {row + line_offset}, column {col + 1}: "
            f"{kind} cell {frame.iat[row, col]!r}"
        )

    if not has_labels:
        return DataMatrix(table)
    if table.shape[1] < 2:
        raise DataParseError(f"{path}: need at least one feature column before the label column")
    labels = table[:, -1]
    if not np.all(np.equal(np.mod(labels, 1), 0)):
        row = int(np.argmax(np.mod(labels, 1) != 0))
        raise DataParseError(f"{path}: line {row + line_offset}: label {labels[row]} is not an integer")
    return DataMatrix(table[:, :-1], labels.astype(np.int64))


def _read_idx(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 4:
        raise DataParseError(f"{path}: byte 0: file too short for an IDX magic number")
    if raw[0] != 0 or raw[1] != 0:
        raise DataParseError(f"{path}: byte 0: magic number must start with two zero bytes")
    if raw[2] not in IDX_DTYPES:
        raise DataParseError(f"{path}: byte 2: unknown IDX type code 0x{raw[2]:02X}")
    dtype = IDX_DTYPES[raw[2]]
    ndim = raw[3]
    header_size = 4 + 4 * ndim
    if ndim < 1 or len(raw) < header_size:
        raise DataParseError(f"{path}: byte 4: truncated dimension header ({ndim} dimensions)")
    dims = tuple(int(x) for x in np.frombuffer(raw, dtype=">u4", count=ndim, offset=4))
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(raw) - header_size != expected:
        raise DataParseError(
            f"{path}: byte {header_size}: expected {expected} data bytes for dims {dims}, "
            f"found {len(raw) - header_size}"
        )
    return np.frombuffer(raw, dtype=dtype, offset=header_size).reshape(dims)


def _load_idx(path: Path, labels_path: Optional[Union[str, Path]]) -> DataMatrix:
    images = _read_idx(path)
    if images.ndim < 2:
        raise DataParseError(f"{path}: byte 3: expected an image file (>= 2 dims), found {images.ndim}")
    values = images.reshape(images.shape[0], -1).astype(np.float64)
    if images.dtype == np.dtype(">u1"):
        values /= 255.0

    labels = None
    if labels_path is not None:
        labels_path = Path(labels_path)
        if not labels_path.exists():
            raise DataParseError(f"{labels_path}: file not found")
        labels = _read_idx(labels_path)
        if labels.ndim != 1 or labels.shape[0] != values.shape[0]:
            raise DataParseError(
                f"{labels_path}: byte 3: expected {values.shape[0]} labels, found shape {labels.shape}"
            )
        labels = labels.astype(np.int64)
    return DataMatrix(values, labels)


def load(
    path: Union[str, Path],
    format: str,
    *,
    header: bool = False,
    has_labels: bool = True,
    labels_path: Optional[Union[str, Path]] = None,
) -> DataMatrix:
    """
    Load a DataMatrix from disk

    Args:
        path: File to read
        format: "csv" (final column is the label unless has_labels=False) or "idx"
        header: CSV only; skip a header line
        has_labels: CSV only; whether the final column holds class ids
        labels_path: IDX only; optional companion label file (magic 0x00000801)

    Returns:
        DataMatrix; IDX unsigned-byte images are scaled to [0, 1] and flattened row-major
    """
    path = Path(path)
    if not path.exists():
        raise DataParseError(f"{path}: file not found")
    if format == "csv":
        data = _load_csv(path, header, has_labels)
    elif format == "idx":
        data = _load_idx(path, labels_path)
    else:
        raise ArgumentError(f"format must be 'csv' or 'idx', got {format!r}")
    logger.debug("Loaded %s: %d rows x %d columns", path, data.n, data.d)
    return data


def sample_batch(data: DataMatrix, class_id: int, batch_size: int, rng: np.random.Generator) -> DataMatrix:
    """
    Draw a batch of one class uniformly with replacement

    Args:
        data: Labeled data
        class_id: Class to draw from
        batch_size: Rows to draw (may exceed the class size)
        rng: Caller-owned generator

    Returns:
        Unlabeled DataMatrix of batch_size rows (a one-class batch cannot carry
        labels covering 0..C-1, so the class stays with the caller)
    """
    if batch_size < 1:
        raise ArgumentError(f"batch_size must be >= 1, got {batch_size}")
    rows = data.class_values(class_id)
    picks = rng.integers(0, rows.shape[0], size=batch_size)
    return DataMatrix(rows[picks])
