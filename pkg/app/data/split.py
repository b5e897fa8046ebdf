"""Labeled/unlabeled partitions of the train split."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

from app.data.manifest import DatasetManifest
from app.errors import ConfigurationError
from app.seeding import rng_for

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SemiSplit:
    labeled_ids: Tuple[str, ...]
    unlabeled_ids: Tuple[str, ...]
    ratio: float
    seed: int

    def to_json(self) -> dict:
        return {
            "labeled_ids": list(self.labeled_ids),
            "unlabeled_ids": list(self.unlabeled_ids),
            "ratio": self.ratio,
            "seed": self.seed,
        }


def labeled_count(ratio: float, n: int) -> int:
    """``round(ratio * n)`` with halves rounded up."""
    return int(ratio * n + 0.5)


def make_split(manifest: DatasetManifest, ratio: float, seed: int) -> SemiSplit:
    """Uniformly sample the labeled subset of the train split; the rest is unlabeled.

    Labeled ids are drawn from train records that carry a mask, and both
    id tuples keep manifest order.
    """
    if not 0.0 < ratio <= 1.0:
        raise ConfigurationError(f"label ratio must lie in (0, 1], got {ratio}")
    train = manifest.by_split("train")
    n_labeled = labeled_count(ratio, len(train))
    if n_labeled == 0:
        raise ConfigurationError(f"ratio {ratio} over {len(train)} train samples yields no labeled samples")
    eligible = [r.id for r in train if r.labeled]
    if len(eligible) < n_labeled:
        raise ConfigurationError(f"{n_labeled} labeled samples requested, only {len(eligible)} train records have masks")

    rng = rng_for(seed, "data", "split")
    chosen = {eligible[int(i)] for i in rng.choice(len(eligible), size=n_labeled, replace=False)}
    labeled = tuple(r.id for r in train if r.id in chosen)
    unlabeled = tuple(r.id for r in train if r.id not in chosen)
    logger.info("Split %d train samples: %d labeled, %d unlabeled", len(train), len(labeled), len(unlabeled))
    return SemiSplit(labeled, unlabeled, ratio, seed)


def save_split(split: SemiSplit, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(split.to_json(), indent=2), encoding="utf-8")
    return path


def load_split(path: Path, manifest: DatasetManifest = None) -> SemiSplit:
    """Read a split file; with a manifest, check it partitions the train split with masked labeled ids."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"split file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        split = SemiSplit(
            tuple(data["labeled_ids"]), tuple(data["unlabeled_ids"]), float(data["ratio"]), int(data["seed"])
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"split file {path} is malformed: {e}") from e
    if not split.labeled_ids:
        raise ConfigurationError(f"split file {path} has no labeled ids")
    if set(split.labeled_ids) & set(split.unlabeled_ids):
        raise ConfigurationError(f"split file {path} lists ids as both labeled and unlabeled")
    if manifest is not None:
        train = {r.id: r for r in manifest.by_split("train")}
        unknown = [i for i in split.labeled_ids + split.unlabeled_ids if i not in train]
        if unknown:
            raise ConfigurationError(f"split file {path} names ids outside the train split: {unknown[:5]}")
        unmasked = [i for i in split.labeled_ids if not train[i].labeled]
        if unmasked:
            raise ConfigurationError(f"labeled ids without masks: {unmasked[:5]}")
        assigned = set(split.labeled_ids) | set(split.unlabeled_ids)
        missing = [i for i in train if i not in assigned]
        if missing:
            raise ConfigurationError(f"split file {path} leaves {len(missing)} train ids unassigned: {missing[:5]}")
    return split
