"""Center padding of feature volumes to a fixed spatial target, and its
exact inverse."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PAPER_TARGET = (224, 224, 64)


class PadError(ValueError):
    pass


@dataclass
class PaddedTensor:
    data: np.ndarray                     # (C, X, Y, Z) zero-padded
    offsets: tuple[int, int, int]        # low-side pad per spatial axis
    original_dims: tuple[int, int, int]

    def crop(self, volume: np.ndarray | None = None) -> np.ndarray:
        """Invert the pad on ``volume`` (default: the stored data)."""
        v = self.data if volume is None else volume
        ox, oy, oz = self.offsets
        nx, ny, nz = self.original_dims
        return v[..., ox:ox + nx, oy:oy + ny, oz:oz + nz]


def pad_center(tensor: np.ndarray, target=PAPER_TARGET) -> PaddedTensor:
    """Zero-pad a (C, X, Y, Z) volume to ``target``, split evenly per axis
    with the extra voxel on the high side.

    Inputs larger than the target are rejected; tiling or downscaling a
    scene is out of scope for this predictor.
    """
    tensor = np.asarray(tensor)
    if tensor.ndim != 4:
        raise PadError(f"expected (C, X, Y, Z), got shape {tensor.shape}")
    dims = tensor.shape[1:]
    if any(d > t for d, t in zip(dims, target)):
        raise PadError(
            f"input dims {dims} exceed the target {tuple(target)}; "
            "tile or downscale the scene before prediction"
        )
    offsets = tuple((t - d) // 2 for d, t in zip(dims, target))
    pads = [(0, 0)] + [
        (off, t - d - off) for off, d, t in zip(offsets, dims, target)
    ]
    data = np.pad(tensor, pads, mode="constant")
    return PaddedTensor(data=data, offsets=offsets, original_dims=tuple(dims))


def auto_target(dims_list, multiple: int = 8) -> tuple[int, int, int]:
    """Smallest per-axis target covering every dims tuple, rounded up to a
    multiple (so the encoder's downsampling stages divide evenly)."""
    arr = np.array(list(dims_list), dtype=int)
    top = arr.max(axis=0)
    return tuple(int(-(-d // multiple) * multiple) for d in top)
