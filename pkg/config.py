"""
Configuration for distillation runs: environment overrides and the YAML run config
"""
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from dotenv import load_dotenv

from checkpoint import FORMAT_MAGIC, PACKAGE_VERSION
from data import DatasetSpec
from distill import DistillConfig
from errors import ArgumentError, ConfigError
from features import FeatureConfig

# Load environment variables
load_dotenv()

OUTPUT_ROOT = os.getenv("NCFM_OUTPUT_ROOT", "")
LOG_LEVEL = os.getenv("NCFM_LOG_LEVEL", "INFO").upper()
STRICT_DEFAULT = os.getenv("NCFM_STRICT", "1") != "0"

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DEFAULT_OUTPUT_DIR = "runs/default"


@dataclass(frozen=True)
class DatasetSettings:
    kind: str = "gaussian-mixture"
    parameters: Dict[str, Any] = field(default_factory=lambda: {
        "means": [[0.0, 0.0], [4.0, 0.0], [2.0, 3.5]],
        "scale": 1.0,
    })
    seed: int = 0
    n_per_class: int = 500
    n_test_per_class: int = 500
    test_seed: Optional[int] = None

    def __post_init__(self):
        if self.n_per_class < 1 or self.n_test_per_class < 1:
            raise ConfigError("dataset.n_per_class and dataset.n_test_per_class must be >= 1")

    def train_spec(self) -> DatasetSpec:
        return DatasetSpec(self.kind, dict(self.parameters), self.seed)

    def test_spec(self) -> DatasetSpec:
        seed = self.seed + 1 if self.test_seed is None else self.test_seed
        return self.train_spec().with_seed(seed)


@dataclass(frozen=True)
class EvalSettings:
    classifier: str = "multinomial-logistic"
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])


@dataclass(frozen=True)
class BenchSettings:
    sizes: List[int] = field(default_factory=lambda: [1000, 3000, 10000, 30000, 100000])
    mmd_sizes: List[int] = field(default_factory=lambda: [100, 300, 1000, 3000])
    q: int = 256
    repeats: int = 3
    dim: int = 8
    seed: int = 0


@dataclass(frozen=True)
class AblationSettings:
    axis: str = "sampler"
    values: List[Any] = field(default_factory=lambda: [True, False])
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])


@dataclass(frozen=True)
class RunConfig:
    """A parsed run configuration plus the raw text it came from"""

    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)
    bench: BenchSettings = field(default_factory=BenchSettings)
    ablation: AblationSettings = field(default_factory=AblationSettings)
    output_dir: str = DEFAULT_OUTPUT_DIR
    strict: bool = STRICT_DEFAULT
    text: str = ""

    def output_path(self) -> Path:
        path = Path(self.output_dir)
        if OUTPUT_ROOT and not path.is_absolute():
            path = Path(OUTPUT_ROOT) / path
        return path


SECTIONS = {
    "dataset": DatasetSettings,
    "features": FeatureConfig,
    "distill": DistillConfig,
    "eval": EvalSettings,
    "bench": BenchSettings,
    "ablation": AblationSettings,
}
TOP_LEVEL_KEYS = set(SECTIONS) | {"output_dir", "strict"}


def _build_section(name: str, cls, values: Any, overrides: Dict[str, Any]):
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise ConfigError(f"{name} must be a mapping, got {type(values).__name__}")
    known = {f.name for f in fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown config key '{name}.{key}'")
    try:
        return cls(**{**overrides, **values})
    except ConfigError:
        raise
    except (ArgumentError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid {name} section: {e}") from e


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """
    Parse YAML run-config text

    Args:
        text: YAML document; an empty document yields all defaults
        source: Name used in diagnostics

    Returns:
        RunConfig carrying the verbatim text
    """
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        raise ConfigError(f"{source}:{where} {getattr(e, 'problem', None) or e}") from e

    document = document or {}
    if not isinstance(document, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    for key in document:
        if key not in TOP_LEVEL_KEYS:
            raise ConfigError(f"{source}: unknown config key '{key}'")

    strict = document.get("strict", STRICT_DEFAULT)
    if not isinstance(strict, bool):
        raise ConfigError(f"{source}: strict must be true or false")
    sections = {
        name: _build_section(name, cls, document.get(name), {"strict": strict} if name == "distill" else {})
        for name, cls in SECTIONS.items()
    }
    output_dir = document.get("output_dir", DEFAULT_OUTPUT_DIR)
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError(f"{source}: output_dir must be a non-empty string")
    return RunConfig(**sections, output_dir=output_dir, strict=strict, text=text)


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    return parse_config(text, str(path))


def _write_info(out_dir: Path, config_text: str, seed: int, strict: bool, extra: Dict[str, Any]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(config_text, encoding="utf-8")
    info = {**extra, "format": FORMAT_MAGIC, "version": PACKAGE_VERSION, "seed": seed, "strict": strict}
    (out_dir / "run_info.json").write_text(json.dumps(info, sort_keys=True, indent=2), encoding="utf-8")


def write_run_info(out_dir: Path, config: RunConfig, seed: int) -> None:
    """Echo the raw config and record what is needed to reproduce the run"""
    _write_info(out_dir, config.text, seed, config.strict, {})


def write_verify_info(out_dir: Path, suites: List[str], seed: int, epsilon_sqrt: float) -> None:
    """
    Record a verify invocation the same way

    verify takes no config file, so the echo is the YAML form of its flags.
    Suites always run in strict mode.
    """
    settings = {"suites": list(suites), "seed": seed, "epsilon_sqrt": epsilon_sqrt}
    echo = yaml.safe_dump({"verify": settings}, sort_keys=False)
    _write_info(out_dir, echo, seed, True, settings)
