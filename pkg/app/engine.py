"""Pseudo-labels, mask-aware confidence scores and the training objectives.

All functions take probability maps batched as ``(B, 2, H, W)`` tensors
(channel 0 background, channel 1 foreground). ``PredictionMap`` instances
and lists of them are accepted too and converted to float64.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import torch

from app.core import FOREGROUND, BACKGROUND, Mask, PredictionMap, stack_predictions
from app.errors import StructuralError

EPS = 1e-7

Probabilities = Union[torch.Tensor, PredictionMap, Sequence[PredictionMap]]
Targets = Union[torch.Tensor, Mask, Sequence[Mask]]


@dataclass(frozen=True)
class LossWeights:
    lambda_x: float = 5.0
    lambda_u: float = 2.0
    tau: float = 0.7
    lambda_t: float = 0.8

    def __post_init__(self):
        if min(self.lambda_x, self.lambda_u, self.tau, self.lambda_t) < 0:
            raise ValueError("loss weights and thresholds must be nonnegative")
        if self.tau > 1 or self.lambda_t > 1:
            raise ValueError("tau and lambda_t must lie in [0, 1]")


@dataclass
class PseudoLabelBundle:
    weak_probabilities: torch.Tensor
    pseudo_labels: torch.Tensor
    validity: torch.Tensor
    scores: torch.Tensor
    tau: float

    def __len__(self) -> int:
        return self.pseudo_labels.shape[0]

    def with_scores(self, scores: torch.Tensor) -> "PseudoLabelBundle":
        return PseudoLabelBundle(self.weak_probabilities, self.pseudo_labels, self.validity, scores, self.tau)


def as_probabilities(probs: Probabilities) -> torch.Tensor:
    if isinstance(probs, PredictionMap):
        return probs.to_tensor().unsqueeze(0)
    if isinstance(probs, torch.Tensor):
        if probs.dim() == 3:
            probs = probs.unsqueeze(0)
        if probs.dim() != 4 or probs.shape[1] != 2:
            raise StructuralError(f"expected (B, 2, H, W) probabilities, got {tuple(probs.shape)}")
        return probs
    return stack_predictions(list(probs))


def as_targets(targets: Targets) -> torch.Tensor:
    if isinstance(targets, Mask):
        return torch.from_numpy(targets.values.astype("int64")).unsqueeze(0)
    if isinstance(targets, torch.Tensor):
        return (targets.unsqueeze(0) if targets.dim() == 2 else targets).long()
    return torch.stack([torch.from_numpy(m.values.astype("int64")) for m in targets])


def _pixel_cross_entropy(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    picked = probs.clamp(EPS, 1.0 - EPS).gather(1, labels.unsqueeze(1)).squeeze(1)
    return -torch.log(picked)


def mask_confidence_score(weak_probabilities: Probabilities, tau: float) -> torch.Tensor:
    """Mean max-confidence over pixels clearing ``tau``; 0 when none do. Shape ``(B,)``."""
    p = as_probabilities(weak_probabilities).detach().double()
    confidence = p.max(dim=1).values
    valid = confidence >= tau
    count = valid.sum(dim=(1, 2))
    total = (confidence * valid).sum(dim=(1, 2))
    score = total / count.clamp(min=1)
    # mean of values >= tau is >= tau; clamp away rounding
    score = score.clamp(min=tau, max=1.0)
    return torch.where(count > 0, score, torch.zeros_like(score))


def make_pseudo_labels(weak_probabilities: Probabilities, tau: float) -> PseudoLabelBundle:
    p = as_probabilities(weak_probabilities).detach().double()
    confidence = p.max(dim=1).values
    labels = (p[:, FOREGROUND] > p[:, BACKGROUND]).long()
    return PseudoLabelBundle(
        weak_probabilities=p,
        pseudo_labels=labels,
        validity=confidence >= tau,
        scores=mask_confidence_score(p, tau),
        tau=tau,
    )


def supervised_loss(prediction: Probabilities, ground_truth: Targets) -> torch.Tensor:
    """Mean per-pixel cross-entropy against the ground-truth mask."""
    p = as_probabilities(prediction)
    target = as_targets(ground_truth).to(p.device)
    if target.shape != (p.shape[0],) + tuple(p.shape[2:]):
        raise StructuralError(f"prediction {tuple(p.shape)} vs ground truth {tuple(target.shape)}")
    return _pixel_cross_entropy(p, target).mean()


def _check_bundle(p: torch.Tensor, bundle: PseudoLabelBundle):
    if p.shape[0] != len(bundle):
        raise StructuralError(f"{p.shape[0]} strong predictions vs {len(bundle)} pseudo-label maps")
    if tuple(p.shape[2:]) != tuple(bundle.pseudo_labels.shape[1:]):
        raise StructuralError(
            f"strong prediction {tuple(p.shape[2:])} vs pseudo-labels {tuple(bundle.pseudo_labels.shape[1:])}"
        )


def unsupervised_loss(
    strong_predictions: Probabilities,
    bundle: PseudoLabelBundle,
    scores: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Self-adaptive unsupervised loss.

    ``mean_i [ s_i / (H*W) * sum_xy 1(max p^w >= tau) * CE(p^s, pseudo-label) ]``.
    ``scores`` overrides ``bundle.scores`` (e.g. all ones to disable the weighting).
    """
    p = as_probabilities(strong_predictions)
    _check_bundle(p, bundle)
    if p.shape[0] == 0:
        return p.new_zeros(())
    s = (bundle.scores if scores is None else scores).to(device=p.device, dtype=p.dtype)
    labels = bundle.pseudo_labels.to(p.device)
    valid = bundle.validity.to(device=p.device, dtype=p.dtype)
    height, width = p.shape[2:]
    per_sample = (valid * _pixel_cross_entropy(p, labels)).sum(dim=(1, 2)) / (height * width)
    return (s * per_sample).mean()


def fixmatch_unsupervised_loss(strong_predictions: Probabilities, bundle: PseudoLabelBundle) -> torch.Tensor:
    """Confidence-masked cross-entropy averaged over each sample's valid pixels."""
    p = as_probabilities(strong_predictions)
    _check_bundle(p, bundle)
    if p.shape[0] == 0:
        return p.new_zeros(())
    labels = bundle.pseudo_labels.to(p.device)
    valid = bundle.validity.to(device=p.device, dtype=p.dtype)
    per_sample = (valid * _pixel_cross_entropy(p, labels)).sum(dim=(1, 2)) / valid.sum(dim=(1, 2)).clamp(min=1)
    return per_sample.mean()


def total_loss(sup, unsup, weights: LossWeights):
    return weights.lambda_x * sup + weights.lambda_u * unsup


def scores_as_list(bundle: PseudoLabelBundle) -> List[float]:
    return [float(s) for s in bundle.scores]
