"""Weak and strong image augmentation with op records.

The ``resmatch`` profile keeps spatial layout and color semantics intact
(resize + horizontal flip weak, intensity-only strong ops). The
``fixmatch_baseline`` profile adds random scale/crop to the weak pipeline
and Invert/Hue/Solarize to the strong pool, for baseline comparison.

Every function takes an explicit ``np.random.Generator``; nothing reads
global random state.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from PIL import Image as PILImage
from PIL import ImageEnhance, ImageFilter, ImageOps

from app.core import Image, Mask
from app.errors import ConfigurationError, StructuralError

FLIP = "hflip"


@dataclass(frozen=True)
class AugmentationRecord:
    ops: Tuple[Tuple[str, dict], ...] = field(default_factory=tuple)

    @property
    def horizontal_flipped(self) -> bool:
        return sum(1 for name, _ in self.ops if name == FLIP) == 1

    @property
    def op_names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.ops)

    def then(self, other: "AugmentationRecord") -> "AugmentationRecord":
        return AugmentationRecord(self.ops + other.ops)


def _to_pil(pixels: np.ndarray) -> PILImage.Image:
    return PILImage.fromarray(np.clip(np.round(pixels * 255.0), 0, 255).astype(np.uint8))


def _from_pil(img: PILImage.Image) -> np.ndarray:
    return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


def _pil_op(fn: Callable[[PILImage.Image, float], PILImage.Image]) -> Callable[[np.ndarray, float], np.ndarray]:
    def apply(pixels: np.ndarray, magnitude: float) -> np.ndarray:
        return _from_pil(fn(_to_pil(pixels), magnitude))

    apply.__name__ = fn.__name__
    return apply


def identity(pixels: np.ndarray, _: float = 0.0) -> np.ndarray:
    return pixels.copy()


@_pil_op
def autocontrast(img, _):
    return ImageOps.autocontrast(img)


@_pil_op
def equalize(img, _):
    return ImageOps.equalize(img)


@_pil_op
def gaussian_blur(img, sigma):
    return img.filter(ImageFilter.GaussianBlur(radius=float(sigma)))


@_pil_op
def contrast(img, factor):
    return ImageEnhance.Contrast(img).enhance(float(factor))


@_pil_op
def sharpness(img, factor):
    return ImageEnhance.Sharpness(img).enhance(float(factor))


@_pil_op
def color(img, factor):
    return ImageEnhance.Color(img).enhance(float(factor))


@_pil_op
def brightness(img, factor):
    return ImageEnhance.Brightness(img).enhance(float(factor))


@_pil_op
def posterize(img, bits):
    return ImageOps.posterize(img, int(bits))


@_pil_op
def invert(img, _):
    return ImageOps.invert(img)


@_pil_op
def hue(img, shift):
    h, s, v = img.convert("HSV").split()
    offset = int(round(float(shift) * 255))
    h = h.point(lambda x: (x + offset) % 256)
    return PILImage.merge("HSV", (h, s, v)).convert("RGB")


@_pil_op
def solarize(img, threshold):
    return ImageOps.solarize(img, int(threshold))


@dataclass(frozen=True)
class StrongOp:
    name: str
    fn: Callable[[np.ndarray, float], np.ndarray]
    low: float = 0.0
    high: float = 0.0
    integer: bool = False

    def sample_magnitude(self, rng: np.random.Generator) -> float:
        if self.low == self.high:
            return float(self.low)
        if self.integer:
            return int(rng.integers(int(self.low), int(self.high) + 1))
        return float(rng.uniform(self.low, self.high))

    def __call__(self, pixels: np.ndarray, magnitude: float) -> np.ndarray:
        return self.fn(pixels, magnitude)


STRONG_OPS: Dict[str, StrongOp] = {
    op.name: op
    for op in (
        StrongOp("identity", identity),
        StrongOp("autocontrast", autocontrast),
        StrongOp("equalize", equalize),
        StrongOp("gaussian_blur", gaussian_blur, 0.1, 2.0),
        StrongOp("contrast", contrast, 0.05, 0.95),
        StrongOp("sharpness", sharpness, 0.05, 0.95),
        StrongOp("color", color, 0.05, 0.95),
        StrongOp("brightness", brightness, 0.05, 0.95),
        StrongOp("posterize", posterize, 4, 8, integer=True),
        StrongOp("invert", invert),
        StrongOp("hue", hue, 0.0, 0.5),
        StrongOp("solarize", solarize, 1, 255, integer=True),
    )
}

RESMATCH_STRONG = (
    "identity", "autocontrast", "equalize", "gaussian_blur", "contrast",
    "sharpness", "color", "brightness", "posterize",
)
FIXMATCH_STRONG = RESMATCH_STRONG + ("invert", "hue", "solarize")


@dataclass(frozen=True)
class AugmentationProfile:
    name: str
    weak_ops: Tuple[str, ...]
    strong_ops: Tuple[str, ...]
    strong_ops_per_sample: int = 2
    image_size: int = 480
    scale_range: Tuple[float, float] = (0.5, 2.0)

    def strong_pool(self):
        return [STRONG_OPS[name] for name in self.strong_ops]


def get_profile(name: str, image_size: int = 480, strong_ops_per_sample: int = 2) -> AugmentationProfile:
    if name == "resmatch":
        return AugmentationProfile("resmatch", ("resize", FLIP), RESMATCH_STRONG, strong_ops_per_sample, image_size)
    if name == "fixmatch_baseline":
        return AugmentationProfile(
            "fixmatch_baseline",
            ("resize", "random_scale", FLIP, "random_crop"),
            FIXMATCH_STRONG,
            strong_ops_per_sample,
            image_size,
        )
    raise ConfigurationError(f"unknown augmentation profile: {name}")


def resize_pixels(pixels: np.ndarray, height: int, width: int) -> np.ndarray:
    if pixels.shape[:2] == (height, width):
        return pixels.copy()
    channels = [
        np.asarray(PILImage.fromarray(pixels[:, :, c].astype(np.float32)).resize((width, height), PILImage.BILINEAR))
        for c in range(3)
    ]
    return np.clip(np.stack(channels, axis=2).astype(np.float64), 0.0, 1.0)


def resize_mask(values: np.ndarray, height: int, width: int) -> np.ndarray:
    if values.shape == (height, width):
        return values.copy()
    img = PILImage.fromarray(values.astype(np.uint8) * 255).resize((width, height), PILImage.NEAREST)
    return (np.asarray(img) > 127).astype(np.uint8)


def hflip(array: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(array[:, ::-1])


def _random_scale(pixels, mask, rng, low, high):
    factor = float(rng.uniform(low, high))
    h = max(1, int(round(pixels.shape[0] * factor)))
    w = max(1, int(round(pixels.shape[1] * factor)))
    pixels = resize_pixels(pixels, h, w)
    if mask is not None:
        mask = resize_mask(mask, h, w)
    return pixels, mask, {"factor": factor}


def _random_crop(pixels, mask, rng, size):
    h, w = pixels.shape[:2]
    ph, pw = max(size, h), max(size, w)
    if (ph, pw) != (h, w):
        padded = np.zeros((ph, pw, 3), dtype=pixels.dtype)
        padded[:h, :w] = pixels
        pixels = padded
        if mask is not None:
            padded_mask = np.zeros((ph, pw), dtype=np.uint8)
            padded_mask[:h, :w] = mask
            mask = padded_mask
    top = int(rng.integers(0, ph - size + 1))
    left = int(rng.integers(0, pw - size + 1))
    pixels = pixels[top:top + size, left:left + size].copy()
    if mask is not None:
        mask = mask[top:top + size, left:left + size].copy()
    return pixels, mask, {"top": top, "left": left, "size": size}


def weak_augment(
    image: Image,
    mask: Optional[Mask],
    profile: AugmentationProfile,
    rng: np.random.Generator,
) -> Tuple[Image, Optional[Mask], AugmentationRecord]:
    """Resize (and for the baseline, scale/crop) with a joint 0.5 horizontal flip."""
    if mask is not None and mask.values.shape != image.pixels.shape[:2]:
        raise StructuralError(f"mask {mask.values.shape} does not match image {image.pixels.shape[:2]}")
    size = profile.image_size
    pixels = image.pixels
    values = None if mask is None else mask.values
    ops = []
    for name in profile.weak_ops:
        if name == "resize":
            pixels = resize_pixels(pixels, size, size)
            if values is not None:
                values = resize_mask(values, size, size)
            ops.append(("resize", {"height": size, "width": size}))
        elif name == FLIP:
            if rng.random() < 0.5:
                pixels = hflip(pixels)
                if values is not None:
                    values = hflip(values)
                ops.append((FLIP, {}))
        elif name == "random_scale":
            pixels, values, params = _random_scale(pixels, values, rng, *profile.scale_range)
            ops.append(("random_scale", params))
        elif name == "random_crop":
            pixels, values, params = _random_crop(pixels, values, rng, size)
            ops.append(("random_crop", params))
        else:
            raise ConfigurationError(f"unknown weak op: {name}")
    out_mask = None if values is None else Mask(values)
    return Image(pixels), out_mask, AugmentationRecord(tuple(ops))


def strong_augment(
    image: Image,
    profile: AugmentationProfile,
    rng: np.random.Generator,
) -> Tuple[Image, AugmentationRecord]:
    """Compose ``strong_ops_per_sample`` ops drawn uniformly (with replacement) from the pool."""
    pool = profile.strong_pool()
    picks = rng.integers(0, len(pool), size=profile.strong_ops_per_sample)
    pixels = image.pixels
    ops = []
    for index in picks:
        op = pool[int(index)]
        magnitude = op.sample_magnitude(rng)
        pixels = np.clip(op(pixels, magnitude), 0.0, 1.0)
        ops.append((op.name, {"magnitude": magnitude}))
    return Image(pixels), AugmentationRecord(tuple(ops))


def mag_blend(strong_image: Image, weak_image: Image, score: float) -> Image:
    """Pixel-wise ``score * strong + (1 - score) * weak``."""
    if strong_image.pixels.shape != weak_image.pixels.shape:
        raise StructuralError(
            f"strong image {strong_image.pixels.shape} vs weak image {weak_image.pixels.shape}"
        )
    if not 0.0 <= score <= 1.0:
        raise StructuralError(f"blend score must lie in [0, 1], got {score}")
    blended = score * strong_image.pixels + (1.0 - score) * weak_image.pixels
    return Image(np.clip(blended, 0.0, 1.0))
