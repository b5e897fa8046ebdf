"""The model interface the training engine depends on."""

from abc import ABC, abstractmethod
from typing import Sequence

import torch
from torch import nn

from app.core import Expression, Image, PredictionMap


class ResModel(nn.Module, ABC):
    """Image + expression -> per-pixel (background, foreground) probabilities.

    ``forward`` takes ``(B, 3, H, W)`` images in [0, 1] and returns
    ``(B, 2, H, W)`` probabilities at the input resolution. Out-of-vocabulary
    tokens map to the unknown token. Wrapping an external full-scale backbone
    means subclassing this and implementing ``forward``.
    """

    @abstractmethod
    def forward(self, images: torch.Tensor, expressions: Sequence[Expression]) -> torch.Tensor:
        ...

    def hyperparameters(self) -> dict:
        return {}

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)

    @torch.no_grad()
    def predict(self, image: Image, expression: Expression) -> PredictionMap:
        was_training = self.training
        self.eval()
        try:
            dtype = next(self.parameters()).dtype
            probs = self.forward(image.to_tensor().to(dtype).unsqueeze(0), [expression])
        finally:
            self.train(was_training)
        return PredictionMap.from_tensor(probs[0])
