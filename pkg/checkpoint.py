"""
Checkpoint container for a distillation run

A checkpoint is a single JSON document tagged with the format magic. Floats are
written with their shortest round-trip representation and keys are sorted, so
two runs with the same config produce byte-identical files.
"""
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from distill import AdamState, DistillConfig, SyntheticSet
from errors import CheckpointError
from features import FeatureConfig, FeatureMap
from freq_sampler import FreqSampler

logger = logging.getLogger(__name__)

FORMAT_MAGIC = "NCFM1"
PACKAGE_VERSION = "0.1.0"


@dataclass(eq=False)
class Checkpoint:
    synthetic: SyntheticSet
    sampler: FreqSampler
    feature_map: FeatureMap
    distill_config: DistillConfig
    feature_config: FeatureConfig
    config_text: str
    version: str = PACKAGE_VERSION

    @property
    def seed(self) -> int:
        return self.distill_config.seed


def _synthetic_to_dict(synth: SyntheticSet) -> Dict[str, Any]:
    return {
        "values": synth.values.tolist(),
        "labels": synth.labels.tolist(),
        "ipc": synth.ipc,
        "adam_m": synth.optimizer.m.tolist(),
        "adam_v": synth.optimizer.v.tolist(),
        "adam_steps": synth.optimizer.steps.tolist(),
        "provenance": synth.provenance,
    }


def _synthetic_from_dict(payload: Dict[str, Any]) -> SyntheticSet:
    values = np.asarray(payload["values"], dtype=np.float64)
    return SyntheticSet(
        values=values,
        labels=np.asarray(payload["labels"], dtype=np.int64),
        ipc=int(payload["ipc"]),
        optimizer=AdamState(
            m=np.asarray(payload["adam_m"], dtype=np.float64).reshape(values.shape),
            v=np.asarray(payload["adam_v"], dtype=np.float64).reshape(values.shape),
            steps=np.asarray(payload["adam_steps"], dtype=np.int64),
        ),
        provenance=dict(payload.get("provenance", {})),
    )


def save_checkpoint(
    path: Union[str, Path],
    synth: SyntheticSet,
    sampler: FreqSampler,
    feature_map: FeatureMap,
    distill_config: DistillConfig,
    feature_config: FeatureConfig,
    config_text: str = "",
) -> Path:
    """
    Write the synthetic set, optimizer state, sampler, feature map and config echo

    Returns:
        The path written
    """
    path = Path(path)
    document = {
        "format": FORMAT_MAGIC,
        "version": PACKAGE_VERSION,
        "seed": distill_config.seed,
        "distill_config": asdict(distill_config),
        "feature_config": asdict(feature_config),
        "config_text": config_text,
        "synthetic": _synthetic_to_dict(synth),
        "sampler": sampler.to_dict(),
        "feature_map": feature_map.to_dict(),
    }
    try:
        path.write_text(json.dumps(document, sort_keys=True, allow_nan=False), encoding="utf-8")
    except (OSError, ValueError) as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e
    logger.debug("Saved checkpoint %s", path)
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Read a checkpoint, rejecting files of another format or version"""
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint not found: {path}") from e
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    if not isinstance(document, dict) or document.get("format") != FORMAT_MAGIC:
        found = document.get("format") if isinstance(document, dict) else None
        raise CheckpointError(f"{path}: expected format {FORMAT_MAGIC}, found {found!r}")
    if document.get("version") != PACKAGE_VERSION:
        raise CheckpointError(
            f"{path}: expected version {PACKAGE_VERSION}, found {document.get('version')!r}"
        )

    try:
        return Checkpoint(
            synthetic=_synthetic_from_dict(document["synthetic"]),
            sampler=FreqSampler.from_dict(document["sampler"]),
            feature_map=FeatureMap.from_dict(document["feature_map"]),
            distill_config=DistillConfig(**document["distill_config"]),
            feature_config=FeatureConfig(**document["feature_config"]),
            config_text=document.get("config_text", ""),
            version=document["version"],
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: malformed checkpoint: {e}") from e
