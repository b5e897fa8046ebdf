"""Domain types shared across the framework, plus oIoU and mask arithmetic.

Images are ``(H, W, 3)`` float arrays in [0, 1]. Prediction maps are
``(2, H, W)`` probability arrays with channel 0 = background and
channel 1 = foreground, so the argmax of a pixel is its mask value and an
exact tie resolves to background.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import torch

from app.errors import StructuralError

BACKGROUND = 0
FOREGROUND = 1
PROB_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class Image:
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise StructuralError(f"image must be (H, W, 3), got {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise StructuralError("image must have positive height and width")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise StructuralError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_tensor(self) -> torch.Tensor:
        return torch.from_numpy(np.ascontiguousarray(self.pixels.transpose(2, 0, 1))).float()


@dataclass(frozen=True)
class Expression:
    raw: str
    tokens: tuple = field(init=False)

    def __post_init__(self):
        tokens = tuple(self.raw.lower().split())
        if not tokens:
            raise StructuralError("expression must contain at least one token")
        object.__setattr__(self, "tokens", tokens)

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Expression":
        return cls(" ".join(tokens))

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True, eq=False)
class Mask:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise StructuralError(f"mask must be 2-D, got {v.shape}")
        if v.size and not np.all((v == 0) | (v == 1)):
            raise StructuralError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "values", v.astype(np.uint8))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def area(self) -> int:
        return int(self.values.sum())

    def __eq__(self, other) -> bool:
        return isinstance(other, Mask) and self.values.shape == other.values.shape and bool(
            np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class Sample:
    id: str
    image: Image
    expression: Expression
    mask: Optional[Mask] = None

    def __post_init__(self):
        if self.mask is not None and (self.mask.height, self.mask.width) != (self.image.height, self.image.width):
            raise StructuralError(
                f"sample {self.id}: mask {self.mask.values.shape} does not match image "
                f"{(self.image.height, self.image.width)}"
            )

    @property
    def labeled(self) -> bool:
        return self.mask is not None


@dataclass(frozen=True, eq=False)
class PredictionMap:
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] != 2:
            raise StructuralError(f"prediction map must be (2, H, W), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise StructuralError("probabilities must be finite")
        if p.min() < 0.0 or p.max() > 1.0:
            raise StructuralError("probabilities must lie in [0, 1]")
        if np.abs(p.sum(axis=0) - 1.0).max() > PROB_TOLERANCE:
            raise StructuralError("per-pixel probabilities must sum to 1")
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def from_foreground(cls, fg) -> "PredictionMap":
        fg = np.asarray(fg, dtype=np.float64)
        return cls(np.stack([1.0 - fg, fg]))

    @classmethod
    def from_tensor(cls, probs: torch.Tensor) -> "PredictionMap":
        return cls(probs.detach().cpu().double().numpy())

    @property
    def height(self) -> int:
        return self.probabilities.shape[1]

    @property
    def width(self) -> int:
        return self.probabilities.shape[2]

    @property
    def foreground(self) -> np.ndarray:
        return self.probabilities[FOREGROUND]

    def to_tensor(self) -> torch.Tensor:
        return torch.from_numpy(self.probabilities.copy())


def stack_predictions(maps: Sequence[PredictionMap]) -> torch.Tensor:
    """Batch prediction maps into a ``(B, 2, H, W)`` float64 tensor."""
    return torch.stack([m.to_tensor() for m in maps])


def binarize(prediction: PredictionMap) -> Mask:
    p = prediction.probabilities
    return Mask((p[FOREGROUND] > p[BACKGROUND]).astype(np.uint8))


def _check_pair(pred: Mask, gt: Mask, index: int):
    if pred.values.shape != gt.values.shape:
        raise StructuralError(
            f"pair {index}: prediction {pred.values.shape} vs ground truth {gt.values.shape}"
        )


def per_sample_iou(pred: Mask, gt: Mask) -> float:
    _check_pair(pred, gt, 0)
    inter = int(np.logical_and(pred.values, gt.values).sum())
    union = int(np.logical_or(pred.values, gt.values).sum())
    return 1.0 if union == 0 else inter / union


def overall_iou(predictions: List[Mask], ground_truths: List[Mask]) -> float:
    """Cumulative intersection over cumulative union across all pairs."""
    if len(predictions) != len(ground_truths):
        raise StructuralError(
            f"{len(predictions)} predictions vs {len(ground_truths)} ground truths"
        )
    intersection = 0
    union = 0
    for i, (pred, gt) in enumerate(zip(predictions, ground_truths)):
        _check_pair(pred, gt, i)
        intersection += int(np.logical_and(pred.values, gt.values).sum())
        union += int(np.logical_or(pred.values, gt.values).sum())
    if union == 0:
        return 1.0
    return intersection / union
