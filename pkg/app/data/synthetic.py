"""Synthetic shapes with referring expressions, a desk-scale RefCOCO stand-in.

Each scene places 2-4 colored shapes in distinct quadrants of a square
canvas (one shape per quadrant, inset by a margin) so shapes never
overlap and every shape lies wholly inside one left/right half and one
top/bottom half. The target expression names either ``<color> <shape>``
or ``<shape> on the <side>``, whichever the scene makes unambiguous.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image as PILImage
from PIL import ImageDraw

from app.core import Mask
from app.data.manifest import DatasetManifest, ManifestRecord, write_manifest
from app.data.rle import encode_rle
from app.errors import ConfigurationError
from app.seeding import rng_for

logger = logging.getLogger(__name__)

COLORS = {
    "red": (220, 40, 40),
    "green": (40, 170, 60),
    "blue": (40, 70, 220),
    "yellow": (230, 210, 40),
}
SHAPES = ("circle", "square", "triangle")
BACKGROUND_RGB = (30, 30, 30)
MIN_IMAGE_SIZE = 12
MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class Shape:
    kind: str
    color: str
    quadrant: Tuple[int, int]
    box: Tuple[int, int, int]  # left, top, side

    @property
    def positions(self) -> Tuple[str, str]:
        row, col = self.quadrant
        return ("left" if col == 0 else "right", "top" if row == 0 else "bottom")

    def raster(self, image_size: int) -> np.ndarray:
        canvas = PILImage.new("L", (image_size, image_size), 0)
        draw = ImageDraw.Draw(canvas)
        x, y, s = self.box
        corners = [x, y, x + s - 1, y + s - 1]
        if self.kind == "circle":
            draw.ellipse(corners, fill=1)
        elif self.kind == "square":
            draw.rectangle(corners, fill=1)
        else:
            draw.polygon([(x, y + s - 1), (x + s - 1, y + s - 1), (x + (s - 1) // 2, y)], fill=1)
        return np.asarray(canvas, dtype=np.uint8)


@dataclass(frozen=True)
class Scene:
    shapes: Tuple[Shape, ...]
    target: int
    expression: str
    pixels: np.ndarray  # uint8 (H, W, 3)
    mask: Mask


def matching_shapes(expression: str, shapes) -> List[Shape]:
    """Shapes satisfying every attribute the expression names."""
    words = set(expression.split())
    out = []
    for shape in shapes:
        if shape.kind not in words:
            continue
        if words & set(COLORS) and shape.color not in words:
            continue
        named_positions = words & {"left", "right", "top", "bottom"}
        if named_positions and not named_positions <= set(shape.positions):
            continue
        out.append(shape)
    return out


def _describe(target: Shape, shapes, rng: np.random.Generator) -> Optional[str]:
    options = []
    by_color = f"{target.color} {target.kind}"
    if len(matching_shapes(by_color, shapes)) == 1:
        options.append(by_color)
    for side in target.positions:
        by_side = f"{target.kind} on the {side}"
        if len(matching_shapes(by_side, shapes)) == 1:
            options.append(by_side)
    if not options:
        return None
    return options[int(rng.integers(len(options)))]


def _place(kind: str, color: str, quadrant: Tuple[int, int], image_size: int, rng) -> Shape:
    half = image_size // 2
    room = half - 2
    side = int(rng.integers(max(3, room // 2), room + 1))
    row, col = quadrant
    left = col * half + 1 + int(rng.integers(0, room - side + 1))
    top = row * half + 1 + int(rng.integers(0, room - side + 1))
    return Shape(kind, color, quadrant, (left, top, side))


def generate_scene(image_size: int, rng: np.random.Generator) -> Scene:
    if image_size < MIN_IMAGE_SIZE:
        raise ConfigurationError(f"synthetic images need at least {MIN_IMAGE_SIZE} pixels per side")
    quadrants = [(0, 0), (0, 1), (1, 0), (1, 1)]
    for _ in range(MAX_ATTEMPTS):
        count = int(rng.integers(2, 5))
        chosen = rng.permutation(4)[:count]
        shapes = tuple(
            _place(
                SHAPES[int(rng.integers(len(SHAPES)))],
                list(COLORS)[int(rng.integers(len(COLORS)))],
                quadrants[int(q)],
                image_size,
                rng,
            )
            for q in chosen
        )
        target = int(rng.integers(count))
        expression = _describe(shapes[target], shapes, rng)
        if expression is None:
            continue

        pixels = np.empty((image_size, image_size, 3), dtype=np.uint8)
        pixels[:] = BACKGROUND_RGB
        for shape in shapes:
            pixels[shape.raster(image_size) == 1] = COLORS[shape.color]
        mask = Mask(shapes[target].raster(image_size))
        return Scene(shapes, target, expression, pixels, mask)
    raise ConfigurationError("could not generate an unambiguous scene")


def make_synthetic(
    count: int,
    image_size: int,
    seed: int,
    root: Path,
    split: str = "train",
) -> DatasetManifest:
    """Generate ``count`` scenes, writing PNGs under ``root/images``."""
    if count < 1:
        raise ConfigurationError("synthetic sample count must be at least 1")
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(count):
        scene = generate_scene(image_size, rng_for(seed, "data", "synthetic", split, i))
        record_id = f"{split}-{i:05d}"
        relative = f"images/{record_id}.png"
        PILImage.fromarray(scene.pixels).save(root / relative)
        records.append(
            ManifestRecord(
                id=record_id,
                image=relative,
                expression=scene.expression,
                split=split,
                height=image_size,
                width=image_size,
                mask=encode_rle(scene.mask.values),
            )
        )
    return DatasetManifest(root=root, records=tuple(records), source="synthetic")


def write_synthetic_dataset(
    root: Path,
    train_count: int,
    val_count: int,
    image_size: int = 64,
    seed: int = 0,
) -> DatasetManifest:
    root = Path(root)
    parts = [make_synthetic(train_count, image_size, seed, root, "train")]
    if val_count > 0:
        parts.append(make_synthetic(val_count, image_size, seed, root, "val"))
    manifest = DatasetManifest(
        root=root,
        records=tuple(r for part in parts for r in part.records),
        source="synthetic",
    )
    write_manifest(manifest)
    logger.info("Wrote %d synthetic samples to %s", len(manifest), root)
    return manifest
