"""Versioned checkpoints: parameters, vocabulary, config hash and loop state."""

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import torch

from app.config import TrainerConfig, build_trainer_config
from app.errors import ConfigurationError
from app.models.toy import ToyResModel
from app.models.vocab import Vocabulary

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    model: ToyResModel
    config: TrainerConfig
    config_hash: str
    epoch: int
    step: int
    best_oiou: Optional[float]
    optimizer_state: Optional[dict]


def save_checkpoint(
    path: Path,
    model: ToyResModel,
    config: TrainerConfig,
    epoch: int,
    step: int,
    optimizer: Optional[torch.optim.Optimizer] = None,
    best_oiou: Optional[float] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "model_state": model.state_dict(),
        "model_kwargs": model.hyperparameters(),
        "vocab": list(model.vocab.tokens),
        "config": config.echo(),
        "config_hash": config.config_hash(),
        "epoch": epoch,
        "step": step,
        "best_oiou": best_oiou,
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    logger.debug("Saved checkpoint %s (epoch %d, step %d)", path, epoch, step)
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise ConfigurationError(f"checkpoint {path} has version {version}, expected {CHECKPOINT_VERSION}")
    config = build_trainer_config(payload["config"])
    model = ToyResModel(
        Vocabulary(tuple(payload["vocab"])),
        max_parameters=config.max_parameters,
        **payload["model_kwargs"],
    )
    model.load_state_dict(payload["model_state"])
    return Checkpoint(
        model=model,
        config=config,
        config_hash=payload["config_hash"],
        epoch=payload["epoch"],
        step=payload["step"],
        best_oiou=payload["best_oiou"],
        optimizer_state=payload["optimizer_state"],
    )
