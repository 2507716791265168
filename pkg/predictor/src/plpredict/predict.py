"""Inference: residual stacks per sample, and prediction files that mirror
the dataset layout so the producer's evaluation tooling can read them."""

from __future__ import annotations

from pathlib import Path

import h5py
import numpy as np
import torch

from .data import Sample, load_samples
from .model import ResidualRegressor
from .normalize import ChannelStats, normalize
from .padding import pad_center
from .train import _sliced_prediction


def predict_residual(
    sample: Sample,
    model: ResidualRegressor,
    stats: ChannelStats,
    pad_target: tuple[int, int, int],
) -> np.ndarray:
    """Predicted environment loss as a (levels, Nx, Ny) stack in dB.

    Deterministic: the model runs in eval mode under no_grad.
    """
    padded = pad_center(normalize(sample.features, stats), pad_target)
    model.eval()
    with torch.no_grad():
        out = model(torch.from_numpy(padded.data).unsqueeze(0))[0, 0]
        stack = _sliced_prediction(out, padded, sample.height_layers())
    return stack.numpy().astype(np.float32)


def reconstruct(residual_stack: np.ndarray, fspl_db: np.ndarray) -> np.ndarray:
    """Total predicted path loss: baseline plus predicted residual."""
    if residual_stack.shape != fspl_db.shape:
        raise ValueError(
            f"shape mismatch: residual {residual_stack.shape} vs fspl {fspl_db.shape}"
        )
    return residual_stack + fspl_db


def write_predictions(
    dataset_path: str | Path,
    out_path: str | Path,
    ids: list[str],
    model: ResidualRegressor,
    stats: ChannelStats,
    pad_target: tuple[int, int, int],
) -> None:
    """Copy the selected samples into a new file with pathloss_db replaced by
    the reconstructed prediction (all other payloads and attrs preserved)."""
    samples = {s.sample_id: s for s in load_samples(dataset_path, ids)}
    with h5py.File(dataset_path, "r") as src, h5py.File(out_path, "w") as dst:
        for sid in ids:
            src.copy(src[f"samples/{sid}"], dst.require_group("samples"), name=sid)
            pred = reconstruct(
                predict_residual(samples[sid], model, stats, pad_target),
                samples[sid].fspl_db,
            )
            group = dst[f"samples/{sid}"]
            del group["pathloss_db"]
            group.create_dataset(
                "pathloss_db", data=pred.astype(np.float32), track_times=False
            )
