"""Masked RMSE: root of the mean squared error over valid cells only."""

from __future__ import annotations

import torch


def masked_rmse(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """sqrt(sum(mask * (pred-target)^2) / sum(mask)); mask must be non-empty.

    Cells outside the mask contribute exactly nothing, so perturbing the
    target there leaves the loss (and its gradient) unchanged.
    """
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: pred {tuple(pred.shape)}, target {tuple(target.shape)}, "
            f"mask {tuple(mask.shape)}"
        )
    m = mask.to(pred.dtype)
    n = m.sum()
    if n.item() == 0:
        raise ValueError("mask selects no cells")
    sq = (pred - target) ** 2 * m
    return torch.sqrt(sq.sum() / n)
