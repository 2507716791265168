"""Per-channel normalization with statistics taken from training scenes only.

The occupancy channel (index 0) is already {0,1} and is left untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class ChannelStats:
    mean: np.ndarray   # (C,)
    std: np.ndarray    # (C,), degenerate channels carry 1.0

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "ChannelStats":
        return ChannelStats(
            np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64)
        )


def compute_stats(feature_volumes) -> ChannelStats:
    """Channel mean/std pooled over a list of (C, X, Y, Z) volumes."""
    volumes = list(feature_volumes)
    if not volumes:
        raise ValueError("no volumes to compute statistics from")
    c = volumes[0].shape[0]
    total = np.zeros(c)
    total_sq = np.zeros(c)
    count = 0
    for v in volumes:
        flat = v.reshape(c, -1).astype(np.float64)
        total += flat.sum(axis=1)
        total_sq += (flat**2).sum(axis=1)
        count += flat.shape[1]
    mean = total / count
    var = np.maximum(total_sq / count - mean**2, 0.0)
    std = np.sqrt(var)
    degenerate = std < 1e-12
    if degenerate[1:].any():
        logger.warning(
            "channels %s have zero variance; using unit divisor",
            np.nonzero(degenerate)[0].tolist(),
        )
    std[degenerate] = 1.0
    # occupancy stays untouched
    mean[0] = 0.0
    std[0] = 1.0
    return ChannelStats(mean=mean, std=std)


def normalize(volume: np.ndarray, stats: ChannelStats) -> np.ndarray:
    out = (volume.astype(np.float32)
           - stats.mean[:, None, None, None].astype(np.float32))
    return out / stats.std[:, None, None, None].astype(np.float32)


def denormalize(volume: np.ndarray, stats: ChannelStats) -> np.ndarray:
    return (volume * stats.std[:, None, None, None].astype(np.float32)
            + stats.mean[:, None, None, None].astype(np.float32))
