"""Dataset manifests: ``manifest.jsonl`` plus an ``images/`` tree.

One JSON object per line with keys ``id``, ``image`` (path relative to the
dataset root), ``expression``, ``split`` and optionally ``mask`` (RLE).
A missing mask marks an unlabeled record. An optional first line
``{"source": "synthetic"}`` records where the data came from.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple

import numpy as np
from PIL import Image as PILImage

from app.core import Expression, Image, Mask
from app.data.rle import decode_rle, validate_rle
from app.errors import DatasetLoadError, RecordError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
SPLITS = ("train", "val", "testA", "testB")
SOURCES = ("refcoco_format", "synthetic")


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    image: str
    expression: str
    split: str
    height: int
    width: int
    mask: Optional[dict] = None

    @property
    def labeled(self) -> bool:
        return self.mask is not None

    def decode_mask(self) -> Mask:
        if self.mask is None:
            raise RecordError(self.id, "record has no mask")
        return Mask(decode_rle(self.mask))

    def to_json(self) -> dict:
        row = {"id": self.id, "image": self.image, "expression": self.expression, "split": self.split}
        if self.mask is not None:
            row["mask"] = self.mask
        return row


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    records: Tuple[ManifestRecord, ...]
    source: str = "refcoco_format"

    def __len__(self) -> int:
        return len(self.records)

    def by_split(self, split: str) -> Tuple[ManifestRecord, ...]:
        return tuple(r for r in self.records if r.split == split)

    def index(self) -> Dict[str, ManifestRecord]:
        return {r.id: r for r in self.records}

    def image_path(self, record: ManifestRecord) -> Path:
        return self.root / record.image


def load_image(path: Path) -> Image:
    with PILImage.open(path) as img:
        return Image(np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0)


def _rows(path: Path) -> Iterator[Tuple[int, dict]]:
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as e:
            raise RecordError(f"line {lineno}", f"invalid JSON: {e}") from e
        if not isinstance(row, dict):
            raise RecordError(f"line {lineno}", "expected a JSON object")
        yield lineno, row


def load_manifest(path) -> DatasetManifest:
    """Load and validate a manifest; masks are checked but decoded lazily."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME if path.is_dir() else path
    if not manifest_path.exists():
        raise DatasetLoadError("manifest not found", [str(manifest_path)])
    root = manifest_path.parent

    source = "refcoco_format"
    raw = []
    for lineno, row in _rows(manifest_path):
        if "id" not in row and "source" in row:
            source = row["source"]
            if source not in SOURCES:
                raise RecordError(f"line {lineno}", f"unknown source '{source}'")
            continue
        missing_keys = [k for k in ("id", "image", "expression", "split") if k not in row]
        if missing_keys:
            raise RecordError(str(row.get("id", f"line {lineno}")), f"missing keys {missing_keys}")
        if row["split"] not in SPLITS:
            raise RecordError(str(row["id"]), f"unknown split '{row['split']}'")
        raw.append(row)

    missing = [str(root / row["image"]) for row in raw if not (root / row["image"]).exists()]
    if missing:
        raise DatasetLoadError("missing image files", missing)

    records = []
    seen = set()
    for row in raw:
        rid = str(row["id"])
        if rid in seen:
            raise RecordError(rid, "duplicate id")
        seen.add(rid)
        if not str(row["expression"]).split():
            raise RecordError(rid, "empty expression")
        with PILImage.open(root / row["image"]) as img:
            width, height = img.size
        mask = row.get("mask")
        if mask is not None:
            try:
                validate_rle(mask, height, width)
            except ValueError as e:
                raise RecordError(rid, f"malformed mask: {e}") from e
        records.append(ManifestRecord(rid, row["image"], row["expression"], row["split"], height, width, mask))

    logger.info("Loaded %d records from %s", len(records), manifest_path)
    return DatasetManifest(root=root, records=tuple(records), source=source)


def write_manifest(manifest: DatasetManifest, root: Optional[Path] = None) -> Path:
    root = Path(root or manifest.root)
    root.mkdir(parents=True, exist_ok=True)
    path = root / MANIFEST_NAME
    lines = [json.dumps({"source": manifest.source})]
    lines += [json.dumps(r.to_json()) for r in manifest.records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def record_expression(record: ManifestRecord) -> Expression:
    return Expression(record.expression)
