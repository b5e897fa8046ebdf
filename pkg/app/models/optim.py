import logging
from typing import Iterable

import torch

from app.errors import NonFiniteLossError
from app.models.base import ResModel

logger = logging.getLogger(__name__)

BETAS = (0.9, 0.999)


def build_optimizer(model: ResModel, learning_rate: float, weight_decay: float = 0.01) -> torch.optim.AdamW:
    return torch.optim.AdamW(model.parameters(), lr=learning_rate, betas=BETAS, weight_decay=weight_decay)


def gradient_step(
    model: ResModel,
    optimizer: torch.optim.Optimizer,
    loss: torch.Tensor,
    batch_ids: Iterable[str] = (),
) -> None:
    """One AdamW update. A non-finite loss or gradient aborts the step untouched."""
    batch_ids = list(batch_ids)
    value = float(loss.detach())
    if not torch.isfinite(loss.detach()):
        raise NonFiniteLossError(batch_ids, value)
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    for p in model.parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            optimizer.zero_grad(set_to_none=True)
            raise NonFiniteLossError(batch_ids, value)
    optimizer.step()
