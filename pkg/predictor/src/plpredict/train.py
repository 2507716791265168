"""Training loop: masked-RMSE regression of the residual (truth minus
free-space baseline) with early stopping on validation loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import DataError, Manifest, Sample, load_samples
from .losses import masked_rmse
from .model import ResidualRegressor
from .normalize import ChannelStats, compute_stats, normalize
from .padding import PaddedTensor, auto_target, pad_center

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 2
    learning_rate: float = 1e-4
    weight_decay: float = 1e-2
    seed: int = 0
    patience: int = 10
    max_steps: int | None = None
    base_channels: int = 16
    pad_multiple: int = 4

    def __post_init__(self) -> None:
        for name in ("epochs", "batch_size", "learning_rate", "patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class TrainResult:
    model: ResidualRegressor
    stats: ChannelStats
    pad_target: tuple[int, int, int]
    history: list[dict] = field(default_factory=list)
    best_val_loss: float = float("inf")
    steps: int = 0


def _prepare(sample: Sample, stats: ChannelStats, target) -> tuple[PaddedTensor, torch.Tensor, torch.Tensor, np.ndarray]:
    padded = pad_center(normalize(sample.features, stats), target)
    residual = torch.from_numpy(sample.residual_db.astype(np.float32))
    mask = torch.from_numpy(sample.valid.astype(np.float32))
    return padded, residual, mask, sample.height_layers()


def _sliced_prediction(volume: torch.Tensor, padded: PaddedTensor, layers: np.ndarray) -> torch.Tensor:
    """Crop a (X, Y, Z) prediction back to the sample dims and pull the
    height layers into a (levels, Nx, Ny) stack."""
    ox, oy, oz = padded.offsets
    nx, ny, nz = padded.original_dims
    cropped = volume[ox:ox + nx, oy:oy + ny, oz:oz + nz]
    return cropped[:, :, torch.from_numpy(layers)].permute(2, 0, 1)


def train(dataset_path: str | Path, manifest: Manifest, cfg: TrainConfig) -> TrainResult:
    train_ids = manifest.ids("train")
    val_ids = manifest.ids("val")
    if not train_ids:
        raise DataError("manifest has an empty training split")
    train_samples = load_samples(dataset_path, train_ids)
    val_samples = load_samples(dataset_path, val_ids) if val_ids else []

    # Normalization statistics come from training scenes only.
    stats = compute_stats(s.features for s in train_samples)
    target = auto_target(
        (s.dims for s in train_samples + val_samples), multiple=cfg.pad_multiple
    )

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = ResidualRegressor(base_channels=cfg.base_channels)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )

    prepared = [_prepare(s, stats, target) for s in train_samples]
    prepared_val = [_prepare(s, stats, target) for s in val_samples]

    def evaluate(items) -> float:
        model.eval()
        with torch.no_grad():
            total_sq, total_n = 0.0, 0.0
            for padded, residual, mask, layers in items:
                x = torch.from_numpy(padded.data).unsqueeze(0)
                pred = _sliced_prediction(model(x)[0, 0], padded, layers)
                total_sq += float((((pred - residual) ** 2) * mask).sum())
                total_n += float(mask.sum())
        return float(np.sqrt(total_sq / total_n)) if total_n else float("nan")

    result = TrainResult(model=model, stats=stats, pad_target=target)
    best_state = None
    stale = 0
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(len(prepared))
        epoch_sq, epoch_n = 0.0, 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [prepared[i] for i in order[start:start + cfg.batch_size]]
            x = torch.from_numpy(np.stack([p.data for p, _, _, _ in batch]))
            out = model(x)[:, 0]
            total_sq = x.new_zeros(())
            total_n = 0.0
            for b, (padded, residual, mask, layers) in enumerate(batch):
                pred = _sliced_prediction(out[b], padded, layers)
                total_sq = total_sq + (((pred - residual) ** 2) * mask).sum()
                total_n += float(mask.sum())
            loss = torch.sqrt(total_sq / total_n)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            result.steps += 1
            epoch_sq += float(total_sq.detach())
            epoch_n += total_n
            if cfg.max_steps is not None and result.steps >= cfg.max_steps:
                break
        train_loss = float(np.sqrt(epoch_sq / epoch_n))
        val_loss = evaluate(prepared_val) if prepared_val else train_loss
        result.history.append(
            {"epoch": epoch, "train_rmse_db": train_loss, "val_rmse_db": val_loss}
        )
        logger.info("epoch %d: train %.3f dB, val %.3f dB", epoch, train_loss, val_loss)
        if val_loss < result.best_val_loss - 1e-6:
            result.best_val_loss = val_loss
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            stale = 0
        else:
            stale += 1
            if stale > cfg.patience:
                logger.info("early stop at epoch %d", epoch)
                break
        if cfg.max_steps is not None and result.steps >= cfg.max_steps:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    return result


def save_archive(path: str | Path, result: TrainResult, cfg: TrainConfig) -> None:
    """Weights plus normalization statistics in one self-contained file."""
    torch.save(
        {
            "state_dict": result.model.state_dict(),
            "stats": result.stats.to_dict(),
            "pad_target": list(result.pad_target),
            "base_channels": cfg.base_channels,
            "history": result.history,
        },
        path,
    )


def load_archive(path: str | Path) -> tuple[ResidualRegressor, ChannelStats, tuple[int, int, int]]:
    payload = torch.load(path, weights_only=False)
    model = ResidualRegressor(base_channels=int(payload["base_channels"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    stats = ChannelStats.from_dict(payload["stats"])
    return model, stats, tuple(payload["pad_target"])
