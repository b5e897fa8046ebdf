"""
Configuration validation and management for RESMatch.

Process-level settings come from the environment (``.env`` supported);
experiment settings live in :class:`TrainerConfig`.
"""

import hashlib
import json
import os
import logging
from typing import List, Literal, Optional
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.errors import ConfigurationError

load_dotenv()

logger = logging.getLogger(__name__)


class Config:
    """Process configuration with validation."""

    def __init__(self):
        self._validate()

    @property
    def out_dir(self) -> Path:
        """Default output directory for runs, previews and sweeps."""
        return Path(os.getenv("RESMATCH_OUT", "./runs"))

    @property
    def log_level(self) -> str:
        """Logging level."""
        return os.getenv("LOG_LEVEL", "INFO").upper()

    @property
    def embedder_url(self) -> Optional[str]:
        """Remote text-encoder endpoint (optional)."""
        return os.getenv("RESMATCH_EMBEDDER_URL")

    @property
    def request_timeout(self) -> int:
        """Default request timeout in seconds."""
        return int(os.getenv("REQUEST_TIMEOUT", "30"))

    @property
    def num_workers(self) -> int:
        """Data-loading worker threads."""
        return int(os.getenv("RESMATCH_WORKERS", "2"))

    def _validate(self):
        """Validate optional configuration."""
        warnings = []

        if not self.embedder_url:
            warnings.append("RESMATCH_EMBEDDER_URL not set - remote embedder needs an explicit endpoint")

        if warnings:
            logger.debug("Configuration warnings:\n" + "\n".join(f"  - {w}" for w in warnings))

    def __repr__(self) -> str:
        return (
            f"Config("
            f"out_dir={self.out_dir}, "
            f"log_level={self.log_level}, "
            f"embedder={'remote' if self.embedder_url else 'hash'}, "
            f"workers={self.num_workers}"
            f")"
        )


Mode = Literal["supervised", "fixmatch", "resmatch"]
Profile = Literal["resmatch", "fixmatch_baseline"]


class TrainerConfig(BaseModel):
    """Experiment settings. Defaults reproduce the published training recipe."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    mode: Mode = "resmatch"
    lambda_x: float = Field(5.0, ge=0)
    lambda_u: float = Field(2.0, ge=0)
    lambda_t: float = Field(0.8, ge=0, le=1)
    tau: float = Field(0.7, ge=0, le=1)
    learning_rate: float = Field(1e-5, ge=0)
    weight_decay: float = Field(0.01, ge=0)
    batch_size_labeled: int = Field(2, ge=1)
    batch_size_unlabeled: int = Field(2, ge=1)
    epochs: int = Field(40, ge=0)
    image_size: int = Field(480, ge=4)
    seed: int = 0
    augmentation_profile: Profile = Field("resmatch", alias="augmentation.profile")
    strong_ops_per_sample: int = Field(2, ge=1)
    embedder_kind: Literal["hash", "remote"] = Field("hash", alias="embedder.kind")
    embedder_dimension: int = Field(256, ge=1, alias="embedder.dimension")
    embedder_endpoint: Optional[str] = Field(None, alias="embedder.endpoint")
    embedder_timeout_ms: int = Field(5000, ge=1, alias="embedder.timeout_ms")
    text_candidate_count: int = Field(10, ge=1)
    n_sr: int = Field(1, ge=0)
    n_ri: int = Field(1, ge=0)
    p_rd: float = Field(0.1, ge=0, le=1)
    use_text_augmentation: bool = True
    use_mag: bool = True
    use_adaptive_loss: bool = True
    eval_every: int = Field(1, ge=1)
    eval_splits: List[str] = Field(default_factory=lambda: ["val"])
    max_parameters: int = Field(500_000, ge=1)
    base_channels: int = Field(16, ge=1)
    text_dim: int = Field(32, ge=1)
    num_workers: int = Field(2, ge=1)
    max_steps_per_epoch: Optional[int] = Field(None, ge=1)
    synonyms_path: Optional[str] = None
    mirror_path: Optional[str] = None
    stopwords_path: Optional[str] = None

    @field_validator("eval_splits")
    @classmethod
    def _known_splits(cls, value: List[str]) -> List[str]:
        unknown = [s for s in value if s not in ("train", "val", "testA", "testB")]
        if unknown:
            raise ValueError(f"unknown eval split(s): {unknown}")
        return value

    def with_overrides(self, **overrides) -> "TrainerConfig":
        """Return a validated copy; ``None`` values are ignored."""
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return build_trainer_config(data)

    def echo(self) -> dict:
        return self.model_dump(mode="json")

    def config_hash(self) -> str:
        canonical = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_trainer_config(data: dict) -> TrainerConfig:
    try:
        return TrainerConfig.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigurationError(f"invalid trainer config: {problems}") from e


def load_trainer_config(path: Optional[str]) -> TrainerConfig:
    """Load a flat JSON document; a missing path yields the defaults."""
    if path is None:
        return TrainerConfig()
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config file {p} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {p} must hold a JSON object")
    return build_trainer_config(data)


# Global config instance
config = Config()


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    print(config)
    print(json.dumps(TrainerConfig().echo(), indent=2))
