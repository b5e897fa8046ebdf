"""A small conv encoder-decoder with text modulation, sized for CPU runs."""

from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from app.core import Expression
from app.errors import ConfigurationError
from app.models.base import ResModel
from app.models.vocab import Vocabulary


def _conv(cin: int, cout: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(cin, cout, 3, stride=stride, padding=1), nn.ReLU(inplace=True))


def _coords(images: torch.Tensor) -> torch.Tensor:
    b, _, h, w = images.shape
    ys = torch.linspace(-1.0, 1.0, h, dtype=images.dtype, device=images.device)
    xs = torch.linspace(-1.0, 1.0, w, dtype=images.dtype, device=images.device)
    grid_y, grid_x = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([grid_x, grid_y]).unsqueeze(0).expand(b, -1, -1, -1)


class ToyResModel(ResModel):
    """Strided conv image encoder, mean-of-embeddings text encoder,
    inner-product + FiLM fusion, and a skip-connected upsampling decoder.
    Coordinate channels let position words ("left", "top") ground spatially.
    """

    def __init__(self, vocab: Vocabulary, base_channels: int = 16, text_dim: int = 32, max_parameters: int = 500_000):
        super().__init__()
        c = base_channels
        self.vocab = vocab
        self.base_channels = base_channels
        self.text_dim = text_dim

        self.embedding = nn.EmbeddingBag(len(vocab), text_dim, mode="mean")
        self.enc1 = _conv(5, c)
        self.enc2 = _conv(c, 2 * c, stride=2)
        self.enc3 = _conv(2 * c, 2 * c, stride=2)
        self.text_query = nn.Linear(text_dim, 2 * c)
        self.film = nn.Linear(text_dim, 4 * c)
        self.fuse = _conv(2 * c + 1, 2 * c)
        self.dec2 = _conv(4 * c, 2 * c)
        self.dec1 = _conv(3 * c, c)
        self.head = nn.Conv2d(c, 2, 1)

        count = self.parameter_count()
        if count > max_parameters:
            raise ConfigurationError(f"toy model has {count} parameters, above the cap of {max_parameters}")

    def hyperparameters(self) -> dict:
        return {"base_channels": self.base_channels, "text_dim": self.text_dim}

    def encode_text(self, expressions: Sequence[Expression]) -> torch.Tensor:
        ids, offsets = self.vocab.encode_batch(expressions)
        device = self.embedding.weight.device
        return self.embedding(ids.to(device), offsets.to(device))

    def forward(self, images: torch.Tensor, expressions: Sequence[Expression]) -> torch.Tensor:
        if images.shape[0] != len(expressions):
            raise ValueError(f"{images.shape[0]} images vs {len(expressions)} expressions")
        height, width = images.shape[2:]
        text = self.encode_text(expressions)

        f1 = self.enc1(torch.cat([images, _coords(images)], dim=1))
        f2 = self.enc2(f1)
        f3 = self.enc3(f2)

        query = self.text_query(text)[:, :, None, None]
        relevance = (f3 * query).sum(dim=1, keepdim=True) / (f3.shape[1] ** 0.5)
        gamma, beta = self.film(text)[:, :, None, None].chunk(2, dim=1)
        fused = self.fuse(torch.cat([f3 * (1 + gamma) + beta, relevance], dim=1))

        d2 = F.interpolate(fused, size=f2.shape[2:], mode="bilinear", align_corners=False)
        d2 = self.dec2(torch.cat([d2, f2], dim=1))
        d1 = F.interpolate(d2, size=f1.shape[2:], mode="bilinear", align_corners=False)
        d1 = self.dec1(torch.cat([d1, f1], dim=1))
        logits = self.head(d1)
        if tuple(logits.shape[2:]) != (height, width):
            logits = F.interpolate(logits, size=(height, width), mode="bilinear", align_corners=False)
        return torch.softmax(logits, dim=1)
