"""Augmentation preview: image triplets plus the text each one would train on."""

import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image as PILImage

from app.augment.image import get_profile, mag_blend, strong_augment, weak_augment
from app.augment.lexicon import TextResources, load_text_resources
from app.augment.text import EdaParams, generate_candidates, semantic_filter, weak_text_adapt
from app.config import TrainerConfig
from app.core import Image
from app.data.loader import SampleStore
from app.data.manifest import DatasetManifest
from app.errors import ConfigurationError
from app.seeding import rng_for
from app.tools.embedder import build_embedder

logger = logging.getLogger(__name__)


def write_ppm(image: Image, path: Path) -> Path:
    pixels = np.round(image.pixels * 255.0).astype(np.uint8)
    PILImage.fromarray(pixels).save(path, format="PPM")
    return path


def preview_augmentations(
    manifest: DatasetManifest,
    count: int,
    seed: int,
    out_dir: Path,
    config: TrainerConfig,
    resources: Optional[TextResources] = None,
) -> Path:
    """Write ``count`` (original, weak, strong) PPM triplets and ``texts.txt``.

    The strong image is blended at s = 1, i.e. the unblended strong view.
    Only candidates retained by the similarity filter are listed.
    """
    if count < 1:
        raise ConfigurationError("preview count must be at least 1")
    records = manifest.by_split("train") or manifest.records
    if not records:
        raise ConfigurationError("manifest has no records to preview")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    resources = resources or load_text_resources(config.synonyms_path, config.mirror_path, config.stopwords_path)
    embedder = build_embedder(
        config.embedder_kind, config.embedder_dimension, config.embedder_endpoint, config.embedder_timeout_ms
    )
    profile = get_profile(config.augmentation_profile, config.image_size, config.strong_ops_per_sample)
    eda = EdaParams(config.n_sr, config.n_ri, config.p_rd)
    store = SampleStore(manifest)

    order = rng_for(seed, "data", "preview").permutation(len(records))[:count]
    lines: List[str] = []
    for k, index in enumerate(order):
        record = records[int(index)]
        sample = store.get(record.id, with_mask=False)
        weak, _, weak_record = weak_augment(sample.image, None, profile, rng_for(seed, "image-aug", "preview", k, "weak"))
        strong, strong_record = strong_augment(weak, profile, rng_for(seed, "image-aug", "preview", k, "strong"))
        strong = mag_blend(strong, weak, 1.0)

        stem = f"{k:03d}_{record.id}"
        write_ppm(sample.image, out_dir / f"{stem}_original.ppm")
        write_ppm(weak, out_dir / f"{stem}_weak.ppm")
        write_ppm(strong, out_dir / f"{stem}_strong.ppm")

        weak_text = weak_text_adapt(sample.expression, weak_record, resources.mirror)
        candidates = generate_candidates(
            weak_text, config.text_candidate_count, rng_for(seed, "text-aug", "preview", k), eda, resources
        )
        candidate_set = semantic_filter(weak_text, candidates, embedder, config.lambda_t)

        lines.append(f"[{stem}]")
        lines.append(f"original: {sample.expression.text}")
        lines.append(f"weak: {weak_text.text} (flipped: {'yes' if weak_record.horizontal_flipped else 'no'})")
        lines.append(f"strong ops: {', '.join(strong_record.op_names)}")
        for expression, theta in candidate_set.retained:
            lines.append(f"candidate: {expression.text} theta={theta:.4f}")
        lines.append("")

    texts = out_dir / "texts.txt"
    texts.write_text("\n".join(lines), encoding="utf-8")
    logger.info("Wrote %d preview triplets to %s", len(order), out_dir)
    return texts
