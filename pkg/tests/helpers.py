"""Model doubles and a tiny hand-made dataset for trainer tests."""

import numpy as np
import torch
from PIL import Image as PILImage
from torch import nn

from app.data.manifest import DatasetManifest, ManifestRecord, load_manifest, write_manifest
from app.data.rle import encode_rle
from app.models.base import ResModel


class UniformModel(ResModel):
    """Predicts (0.5, 0.5) everywhere; the anchor keeps the loss attached to a parameter."""

    def __init__(self):
        super().__init__()
        self.anchor = nn.Parameter(torch.zeros(1))

    def forward(self, images, expressions):
        b, _, h, w = images.shape
        return torch.full((b, 2, h, w), 0.5, dtype=images.dtype) + 0.0 * self.anchor


class BrightnessModel(ResModel):
    """Foreground exactly where the mean intensity exceeds 0.5."""

    def __init__(self, invert: bool = False):
        super().__init__()
        self.anchor = nn.Parameter(torch.zeros(1))
        self.invert = invert

    def forward(self, images, expressions):
        fg = (images.mean(dim=1) > 0.5).to(images.dtype)
        if self.invert:
            fg = torch.zeros_like(fg)
        return torch.stack([1.0 - fg, fg], dim=1) + 0.0 * self.anchor


def write_bright_square_dataset(root, count=3, size=8, split="val"):
    """Dark images with one bright 3x3 square; the mask is the square."""
    (root / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(count):
        pixels = np.full((size, size, 3), 20, dtype=np.uint8)
        mask = np.zeros((size, size), dtype=np.uint8)
        top, left = i % (size - 3), (2 * i) % (size - 3)
        pixels[top:top + 3, left:left + 3] = 240
        mask[top:top + 3, left:left + 3] = 1
        relative = f"images/sq-{i}.png"
        PILImage.fromarray(pixels).save(root / relative)
        records.append(ManifestRecord(f"sq-{i}", relative, "bright square", split, size, size, encode_rle(mask)))
    write_manifest(DatasetManifest(root=root, records=tuple(records)))
    return load_manifest(root)
