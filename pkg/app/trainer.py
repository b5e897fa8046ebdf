"""Training orchestration: supervised, FixMatch-baseline and RESMatch steps,
evaluation, checkpointed experiment runs and ratio/seed sweeps.

Random streams are keyed by ``(seed, stream, epoch, step, branch, index)``
so any two runs with the same seed see the same augmentations at the same
step, whatever the mode.
"""

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F

from app.augment.image import AugmentationProfile, get_profile, mag_blend, resize_pixels, strong_augment, weak_augment
from app.augment.lexicon import TextResources, load_text_resources
from app.augment.text import (
    EdaParams,
    TextCandidateSet,
    generate_candidates,
    pick_training_text,
    semantic_filter,
    weak_text_adapt,
)
from app.config import TrainerConfig
from app.core import Expression, Image, Mask, PredictionMap, Sample, binarize, overall_iou, per_sample_iou
from app.data.loader import SampleStore, iter_batches
from app.data.manifest import DatasetManifest
from app.data.split import SemiSplit, make_split
from app.engine import (
    LossWeights,
    PseudoLabelBundle,
    as_targets,
    fixmatch_unsupervised_loss,
    make_pseudo_labels,
    supervised_loss,
    total_loss,
    unsupervised_loss,
)
from app.errors import ConfigurationError, NonFiniteLossError, RecordError
from app.models.base import ResModel
from app.models.checkpoint import load_checkpoint, save_checkpoint
from app.models.optim import build_optimizer, gradient_step
from app.models.toy import ToyResModel
from app.models.vocab import Vocabulary
from app.seeding import derive_seed, rng_for
from app.tools.embedder import build_embedder
from app.tools.report_pdf import generate_sweep_report

logger = logging.getLogger(__name__)

EVAL_BATCH_SIZE = 8
RESULTS_NAME = "results.jsonl"
LAST_CHECKPOINT = "last.pt"
BEST_CHECKPOINT = "best.pt"


@dataclass
class TrainingContext:
    config: TrainerConfig
    optimizer: torch.optim.Optimizer
    resources: TextResources
    embedder: Callable[[Expression], np.ndarray]
    weights: LossWeights
    eda: EdaParams
    labeled_profile: AugmentationProfile
    resmatch_profile: AugmentationProfile
    fixmatch_profile: AugmentationProfile

    @classmethod
    def build(cls, config: TrainerConfig, model: ResModel, resources: Optional[TextResources] = None):
        profile = lambda name: get_profile(name, config.image_size, config.strong_ops_per_sample)  # noqa: E731
        return cls(
            config=config,
            optimizer=build_optimizer(model, config.learning_rate, config.weight_decay),
            resources=resources or load_text_resources(config.synonyms_path, config.mirror_path, config.stopwords_path),
            embedder=build_embedder(
                config.embedder_kind, config.embedder_dimension, config.embedder_endpoint, config.embedder_timeout_ms
            ),
            weights=LossWeights(config.lambda_x, config.lambda_u, config.tau, config.lambda_t),
            eda=EdaParams(config.n_sr, config.n_ri, config.p_rd),
            labeled_profile=profile("resmatch"),
            resmatch_profile=profile(config.augmentation_profile),
            fixmatch_profile=profile("fixmatch_baseline"),
        )


@dataclass
class StepResult:
    mode: str
    sup_loss: float
    unsup_loss: float
    total_loss: float
    scores: List[float]
    valid_fraction: List[float]
    batch_ids: List[str]

    @property
    def mean_score(self) -> Optional[float]:
        return float(np.mean(self.scores)) if self.scores else None


@dataclass
class UnlabeledViews:
    ids: List[str]
    weak_images: List[Image]
    strong_images: List[Image]
    weak_texts: List[Expression]
    strong_texts: List[Expression]
    bundle: PseudoLabelBundle
    text_sets: List[Optional[TextCandidateSet]] = field(default_factory=list)


@dataclass
class EvalResult:
    split: str
    oiou: float
    per_sample: Dict[str, float]

    @property
    def count(self) -> int:
        return len(self.per_sample)


@dataclass
class ExperimentResult:
    out_dir: Path
    final_oiou: Dict[str, float]
    losses: List[dict]
    checkpoints: Dict[str, Path]
    flagged_steps: List[int]


def _batch_tensor(images: Sequence[Image], model: ResModel) -> torch.Tensor:
    dtype = next(model.parameters()).dtype
    return torch.stack([img.to_tensor() for img in images]).to(dtype)


def prepare_labeled(
    batch: Sequence[Sample], ctx: TrainingContext, seed: int, epoch: int = 0, step: int = 0
) -> Tuple[List[Image], List[Expression], List[Mask]]:
    """Weak view of each labeled sample; flips mirror position words."""
    images, texts, masks = [], [], []
    for i, sample in enumerate(batch):
        if sample.mask is None:
            raise RecordError(sample.id, "labeled batch contains an unlabeled sample")
        rng = rng_for(seed, "image-aug", epoch, step, "labeled", i)
        image, mask, record = weak_augment(sample.image, sample.mask, ctx.labeled_profile, rng)
        images.append(image)
        masks.append(mask)
        texts.append(weak_text_adapt(sample.expression, record, ctx.resources.mirror))
    return images, texts, masks


def prepare_unlabeled_views(
    model: ResModel,
    batch: Sequence[Sample],
    ctx: TrainingContext,
    seed: int,
    epoch: int = 0,
    step: int = 0,
    variant: str = "resmatch",
) -> UnlabeledViews:
    """Weak views, gradient-free pseudo-labels, then the strong views built on top of the weak ones."""
    config = ctx.config
    resmatch = variant == "resmatch"
    profile = ctx.resmatch_profile if resmatch else ctx.fixmatch_profile
    text_aug = resmatch and config.use_text_augmentation

    # --- 1. Weak image + text augmentation ---
    weak_images, weak_texts = [], []
    for i, sample in enumerate(batch):
        rng = rng_for(seed, "image-aug", epoch, step, "unlabeled", i, "weak")
        image, _, record = weak_augment(sample.image, None, profile, rng)
        weak_images.append(image)
        weak_texts.append(weak_text_adapt(sample.expression, record, ctx.resources.mirror) if text_aug else sample.expression)

    # --- 2. Weak forward, no gradients ---
    with torch.no_grad():
        weak_probs = model(_batch_tensor(weak_images, model), weak_texts)

    # --- 3. Pseudo-labels and mask-aware confidence ---
    bundle = make_pseudo_labels(weak_probs, config.tau)

    # --- 4. Strong images, blended toward the weak view by confidence ---
    strong_images = []
    for i, weak in enumerate(weak_images):
        strong, _ = strong_augment(weak, profile, rng_for(seed, "image-aug", epoch, step, "unlabeled", i, "strong"))
        if resmatch and config.use_mag:
            strong = mag_blend(strong, weak, float(bundle.scores[i]))
        strong_images.append(strong)

    # --- 5. Strong text candidates filtered by similarity ---
    strong_texts, text_sets = [], []
    for i, weak_text in enumerate(weak_texts):
        if not text_aug:
            strong_texts.append(weak_text)
            text_sets.append(None)
            continue
        candidates = generate_candidates(
            weak_text,
            config.text_candidate_count,
            rng_for(seed, "text-aug", epoch, step, i, "candidates"),
            ctx.eda,
            ctx.resources,
        )
        candidate_set = semantic_filter(weak_text, candidates, ctx.embedder, config.lambda_t)
        strong_texts.append(pick_training_text(candidate_set, rng_for(seed, "text-aug", epoch, step, i, "pick")))
        text_sets.append(candidate_set)

    return UnlabeledViews(
        ids=[s.id for s in batch],
        weak_images=weak_images,
        strong_images=strong_images,
        weak_texts=weak_texts,
        strong_texts=strong_texts,
        bundle=bundle,
        text_sets=text_sets,
    )


def _supervised_branch(model, labeled_batch, ctx, seed, epoch, step) -> torch.Tensor:
    images, texts, masks = prepare_labeled(labeled_batch, ctx, seed, epoch, step)
    probs = model(_batch_tensor(images, model), texts)
    return supervised_loss(probs, as_targets(masks))


def _finish_step(model, ctx, mode, sup, unsup, views: Optional[UnlabeledViews], labeled_batch) -> StepResult:
    total = total_loss(sup, unsup, ctx.weights)
    batch_ids = [s.id for s in labeled_batch] + (views.ids if views else [])
    gradient_step(model, ctx.optimizer, total, batch_ids)
    if views is None or len(views.bundle) == 0:
        scores, valid_fraction = [], []
    else:
        scores = [float(s) for s in views.bundle.scores]
        valid_fraction = [float(v) for v in views.bundle.validity.double().mean(dim=(1, 2))]
    return StepResult(
        mode=mode,
        sup_loss=float(sup.detach()),
        unsup_loss=float(unsup.detach()) if torch.is_tensor(unsup) else float(unsup),
        total_loss=float(total.detach()),
        scores=scores,
        valid_fraction=valid_fraction,
        batch_ids=batch_ids,
    )


def train_step_supervised(
    model: ResModel, labeled_batch: Sequence[Sample], ctx: TrainingContext, seed: int, epoch: int = 0, step: int = 0
) -> StepResult:
    sup = _supervised_branch(model, labeled_batch, ctx, seed, epoch, step)
    return _finish_step(model, ctx, "supervised", sup, sup.new_zeros(()), None, labeled_batch)


def train_step_resmatch(
    model: ResModel,
    labeled_batch: Sequence[Sample],
    unlabeled_batch: Sequence[Sample],
    ctx: TrainingContext,
    seed: int,
    epoch: int = 0,
    step: int = 0,
) -> StepResult:
    """One RESMatch update.

    Weak views of the unlabeled batch produce pseudo-labels and per-sample
    confidence ``s_i``; the strong views are blended toward the weak ones by
    ``s_i`` and paired with similarity-filtered text; the unlabeled loss is
    weighted by ``s_i``. An empty unlabeled batch reduces to a supervised step.
    """
    views = None
    if unlabeled_batch:
        views = prepare_unlabeled_views(model, unlabeled_batch, ctx, seed, epoch, step, "resmatch")
    # --- 6. Strong forward ---
    if views is not None:
        strong_probs = model(_batch_tensor(views.strong_images, model), views.strong_texts)
    # --- 7. Supervised forward ---
    sup = _supervised_branch(model, labeled_batch, ctx, seed, epoch, step)
    # --- 8. Losses ---
    if views is None:
        unsup = sup.new_zeros(())
    else:
        scores = None if ctx.config.use_adaptive_loss else torch.ones(len(views.bundle), dtype=torch.float64)
        unsup = unsupervised_loss(strong_probs, views.bundle, scores)
    # --- 9. Gradient step ---
    return _finish_step(model, ctx, "resmatch", sup, unsup, views, labeled_batch)


def train_step_fixmatch(
    model: ResModel,
    labeled_batch: Sequence[Sample],
    unlabeled_batch: Sequence[Sample],
    ctx: TrainingContext,
    seed: int,
    epoch: int = 0,
    step: int = 0,
) -> StepResult:
    """Baseline step: wider augmentation pool, raw text, no blending, unweighted loss."""
    views = None
    if unlabeled_batch:
        views = prepare_unlabeled_views(model, unlabeled_batch, ctx, seed, epoch, step, "fixmatch")
        strong_probs = model(_batch_tensor(views.strong_images, model), views.strong_texts)
    sup = _supervised_branch(model, labeled_batch, ctx, seed, epoch, step)
    unsup = sup.new_zeros(()) if views is None else fixmatch_unsupervised_loss(strong_probs, views.bundle)
    return _finish_step(model, ctx, "fixmatch", sup, unsup, views, labeled_batch)


def run_step(model, labeled_batch, unlabeled_batch, ctx, seed, epoch=0, step=0) -> StepResult:
    mode = ctx.config.mode
    if mode == "supervised":
        return train_step_supervised(model, labeled_batch, ctx, seed, epoch, step)
    if mode == "fixmatch":
        return train_step_fixmatch(model, labeled_batch, unlabeled_batch, ctx, seed, epoch, step)
    return train_step_resmatch(model, labeled_batch, unlabeled_batch, ctx, seed, epoch, step)


def evaluate(
    model: ResModel,
    manifest: DatasetManifest,
    split: str,
    config: TrainerConfig,
    store: Optional[SampleStore] = None,
) -> EvalResult:
    """oIoU over a manifest split: resize to the model size, predict, resize back, binarize."""
    records = manifest.by_split(split)
    if not records:
        raise ConfigurationError(f"split '{split}' has no records to evaluate")
    unlabeled = [r.id for r in records if not r.labeled]
    if unlabeled:
        raise RecordError(unlabeled[0], f"evaluation split '{split}' contains records without masks")

    store = store or SampleStore(manifest)
    size = config.image_size
    ids = [r.id for r in records]
    batches = [ids[i:i + EVAL_BATCH_SIZE] for i in range(0, len(ids), EVAL_BATCH_SIZE)]
    predictions: List[Mask] = []
    truths: List[Mask] = []

    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            for batch in iter_batches(store, batches, with_mask=True, workers=config.num_workers):
                images = [Image(resize_pixels(s.image.pixels, size, size)) for s in batch]
                probs = model(_batch_tensor(images, model), [s.expression for s in batch])
                for sample, p in zip(batch, probs):
                    p = p.double().unsqueeze(0)
                    if (sample.image.height, sample.image.width) != (size, size):
                        p = F.interpolate(p, size=(sample.image.height, sample.image.width), mode="bilinear", align_corners=False)
                    predictions.append(binarize(PredictionMap.from_tensor(p[0])))
                    truths.append(sample.mask)
    finally:
        model.train(was_training)

    per_sample = {i: per_sample_iou(p, t) for i, p, t in zip(ids, predictions, truths)}
    return EvalResult(split, overall_iou(predictions, truths), per_sample)


def build_model(config: TrainerConfig, manifest: DatasetManifest, resources: TextResources) -> ToyResModel:
    vocab = Vocabulary.build(
        (Expression(r.expression) for r in manifest.by_split("train")),
        extra_words=resources.vocabulary(),
    )
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(derive_seed(config.seed, "model-init"))
        model = ToyResModel(vocab, config.base_channels, config.text_dim, config.max_parameters)
    logger.info("Built model with %d parameters, vocabulary of %d", model.parameter_count(), len(vocab))
    return model


def epoch_schedule(split: SemiSplit, config: TrainerConfig, seed: int, epoch: int) -> List[Tuple[List[str], List[str]]]:
    """(labeled ids, unlabeled ids) per step.

    The epoch walks the unlabeled set once (the labeled set when there is
    no unlabeled data); labeled batches cycle through a fresh permutation.
    """
    labeled = list(split.labeled_ids)
    unlabeled = list(split.unlabeled_ids)
    if not labeled:
        raise ConfigurationError("split has no labeled samples to train on")
    labeled_order = [labeled[i] for i in rng_for(seed, "data", "labeled", epoch).permutation(len(labeled))]
    unlabeled_order = [unlabeled[i] for i in rng_for(seed, "data", "unlabeled", epoch).permutation(len(unlabeled))]

    bl, bu = config.batch_size_labeled, config.batch_size_unlabeled
    if unlabeled:
        steps = math.ceil(len(unlabeled) / bu)
    else:
        steps = math.ceil(len(labeled) / bl)
    if config.max_steps_per_epoch is not None:
        steps = min(steps, config.max_steps_per_epoch)

    schedule = []
    for k in range(steps):
        lab = [labeled_order[(k * bl + j) % len(labeled)] for j in range(bl)]
        unl = unlabeled_order[k * bu:(k + 1) * bu]
        schedule.append((lab, unl))
    return schedule


def _read_results(path: Path) -> List[dict]:
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def _write_rows(path: Path, rows: Sequence[dict], mode: str = "a"):
    with path.open(mode, encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def run_experiment(
    config: TrainerConfig,
    manifest: DatasetManifest,
    split: SemiSplit,
    out_dir: Path,
    resume: bool = False,
    resources: Optional[TextResources] = None,
) -> ExperimentResult:
    """Train with periodic evaluation, writing ``results.jsonl`` and checkpoints under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / RESULTS_NAME
    last_path = out_dir / LAST_CHECKPOINT
    best_path = out_dir / BEST_CHECKPOINT
    seed = config.seed

    # --- 1. Resources, model and optimizer ---
    resources = resources or load_text_resources(config.synonyms_path, config.mirror_path, config.stopwords_path)
    start_epoch, global_step, best = 0, 0, None
    prior_evals: Dict[int, dict] = {}
    if resume and last_path.exists():
        ckpt = load_checkpoint(last_path)
        if ckpt.config.model_copy(update={"epochs": config.epochs}).config_hash() != config.config_hash():
            raise ConfigurationError(f"checkpoint {last_path} was written under a different config")
        model = ckpt.model
        ctx = TrainingContext.build(config, model, resources)
        if ckpt.optimizer_state is not None:
            ctx.optimizer.load_state_dict(ckpt.optimizer_state)
        start_epoch, global_step, best = ckpt.epoch, ckpt.step, ckpt.best_oiou
        kept = [
            r for r in _read_results(results_path)
            if r["kind"] == "header" or (r["kind"] == "step" and r["epoch"] < start_epoch)
            or (r["kind"] == "eval" and r["epoch"] <= start_epoch)
        ]
        _write_rows(results_path, kept, mode="w")
        prior_evals = {r["epoch"]: r for r in kept if r["kind"] == "eval"}
        logger.info("Resuming from %s at epoch %d, step %d", last_path, start_epoch, global_step)
    else:
        model = build_model(config, manifest, resources)
        ctx = TrainingContext.build(config, model, resources)
        header = {
            "kind": "header",
            "config": config.echo(),
            "config_hash": config.config_hash(),
            "labeled": len(split.labeled_ids),
            "unlabeled": len(split.unlabeled_ids),
            "ratio": split.ratio,
            "split_seed": split.seed,
        }
        _write_rows(results_path, [header], mode="w")

    store = SampleStore(manifest)
    eval_splits = [s for s in config.eval_splits if manifest.by_split(s)]
    for missing in set(config.eval_splits) - set(eval_splits):
        logger.warning("Eval split '%s' is empty in this manifest, skipping", missing)

    def run_eval(completed_epochs: int) -> Dict[str, float]:
        scores = {s: evaluate(model, manifest, s, config, store).oiou for s in eval_splits}
        row = {"kind": "eval", "epoch": completed_epochs, "step": global_step, "oIoU_by_split": scores}
        if eval_splits:
            row["oIoU"] = scores[eval_splits[0]]
        _write_rows(results_path, [row])
        return scores

    final: Dict[str, float] = {}
    flagged: List[int] = []
    checkpoints: Dict[str, Path] = {}
    model.train()

    # --- 2. Epoch loop ---
    with ThreadPoolExecutor(max_workers=config.num_workers, thread_name_prefix="resmatch-load") as pool:
        for epoch in range(start_epoch, config.epochs):
            started = time.time()
            schedule = epoch_schedule(split, config, seed, epoch)
            labeled_batches = iter_batches(store, [s[0] for s in schedule], True, prefetch=2, executor=pool)
            unlabeled_ids = [[] if config.mode == "supervised" else s[1] for s in schedule]
            unlabeled_batches = iter_batches(store, unlabeled_ids, False, prefetch=2, executor=pool)
            rows = []
            for step, (lab, unl) in enumerate(zip(labeled_batches, unlabeled_batches)):
                try:
                    result = run_step(model, lab, unl, ctx, seed, epoch, step)
                    rows.append({
                        "kind": "step",
                        "step": global_step,
                        "epoch": epoch,
                        "L_sup": result.sup_loss,
                        "L_unsup": result.unsup_loss,
                        "L_total": result.total_loss,
                        "mean_s": result.mean_score,
                        "scores": result.scores,
                        "flagged": False,
                    })
                except NonFiniteLossError as e:
                    logger.warning("Step %d skipped: %s", global_step, e)
                    flagged.append(global_step)
                    rows.append({
                        "kind": "step",
                        "step": global_step,
                        "epoch": epoch,
                        "L_sup": None,
                        "L_unsup": None,
                        "L_total": None,
                        "mean_s": None,
                        "flagged": True,
                        "batch_ids": e.batch_ids,
                    })
                global_step += 1
            _write_rows(results_path, rows)
            logger.info("Epoch %d completed in %.2fs (%d steps)", epoch + 1, time.time() - started, len(rows))

            # --- 3. Periodic evaluation and checkpoints ---
            completed = epoch + 1
            if eval_splits and (completed % config.eval_every == 0 or completed == config.epochs):
                final = run_eval(completed)
                primary = final[eval_splits[0]]
                if best is None or primary > best:
                    best = primary
                    checkpoints["best"] = save_checkpoint(best_path, model, config, completed, global_step, best_oiou=best)
                    logger.info("New best oIoU %.4f at epoch %d", best, completed)
            checkpoints["last"] = save_checkpoint(
                last_path, model, config, completed, global_step, ctx.optimizer, best_oiou=best
            )

    # --- 4. Final evaluation when nothing was evaluated in the loop ---
    if not final and eval_splits:
        completed = max(start_epoch, config.epochs)
        if completed in prior_evals:
            final = prior_evals[completed]["oIoU_by_split"]
        else:
            final = run_eval(completed)

    losses = [r for r in _read_results(results_path) if r["kind"] == "step"]
    if best_path.exists():
        checkpoints.setdefault("best", best_path)
    if last_path.exists():
        checkpoints.setdefault("last", last_path)
    return ExperimentResult(out_dir, final, losses, checkpoints, flagged)


def run_sweep(
    config: TrainerConfig,
    manifest: DatasetManifest,
    ratios: Sequence[float],
    seeds: Sequence[int],
    out_dir: Path,
    split_fn: Optional[Callable[[DatasetManifest, float, int], SemiSplit]] = None,
) -> pd.DataFrame:
    """One experiment per (ratio, seed); writes ``summary.csv`` and ``summary.pdf``."""
    if not ratios:
        raise ConfigurationError("sweep needs at least one ratio")
    if not seeds:
        raise ConfigurationError("sweep needs at least one seed")
    split_fn = split_fn or make_split
    out_dir = Path(out_dir)
    rows = []
    for ratio in ratios:
        for seed in seeds:
            run_config = config.with_overrides(seed=seed)
            split = split_fn(manifest, ratio, seed)
            result = run_experiment(run_config, manifest, split, out_dir / f"ratio-{ratio:g}-seed-{seed}")
            primary = next(iter(result.final_oiou.values()), float("nan"))
            rows.append({"ratio": ratio, "seed": seed, "mode": config.mode, "oIoU": primary})
            logger.info("Sweep ratio=%g seed=%d: oIoU %.4f", ratio, seed, primary)

    summary = pd.DataFrame(rows, columns=["ratio", "seed", "mode", "oIoU"])
    out_dir.mkdir(parents=True, exist_ok=True)
    summary.to_csv(out_dir / "summary.csv", index=False)
    aggregate = summary.groupby(["ratio", "mode"])["oIoU"].agg(["median", "mean", "std"]).reset_index()
    generate_sweep_report(
        title=f"{config.mode} label-ratio sweep",
        config_echo=config.echo(),
        rows=summary.to_dict("records"),
        aggregate=aggregate.to_dict("records"),
        out_path=out_dir / "summary.pdf",
    )
    return summary
