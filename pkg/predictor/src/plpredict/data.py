"""Read voxel-feature datasets and split manifests.

This package talks to the dataset producer only through its published file
contracts: HDF5 files with ``/samples/<id>/`` groups (format_version 1) and
split-manifest JSON with train/val/test lists of {scene_id, sample_id}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import h5py
import numpy as np

FORMAT_VERSION = 1

_REQUIRED = (
    "occupancy", "reflection_db", "transmission_db", "distance_m",
    "tx_position_m", "fspl_db", "pathloss_db",
)


class DataError(ValueError):
    """Input files do not match the published contract."""


@dataclass
class Sample:
    """One transmitter configuration, unpacked for training."""

    sample_id: str
    scene_id: str
    features: np.ndarray     # (4, Nx, Ny, Nz) float32
    fspl_db: np.ndarray      # (levels, Nx, Ny) float32
    pathloss_db: np.ndarray  # (levels, Nx, Ny) float32
    valid: np.ndarray        # (levels, Nx, Ny) bool
    heights_m: np.ndarray
    origin_m: np.ndarray
    voxel_size_m: float

    @property
    def residual_db(self) -> np.ndarray:
        """Training target: environment loss beyond the free-space baseline."""
        return self.pathloss_db - self.fspl_db

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.features.shape[1:]

    def height_layers(self) -> np.ndarray:
        """Voxel layer per height level (nearest center, ties to the lower)."""
        t = (self.heights_m - self.origin_m[2]) / self.voxel_size_m - 0.5
        return np.floor(t + 0.5 - 1e-9).astype(np.int64)


def _read_group(sample_id: str, g: h5py.Group) -> Sample:
    for name in _REQUIRED:
        if name not in g:
            raise DataError(f"sample {sample_id!r}: missing dataset {name!r}")
    version = int(g.attrs.get("format_version", -1))
    if version != FORMAT_VERSION:
        raise DataError(f"sample {sample_id!r}: format_version {version} unsupported")
    features = np.stack(
        [
            g["occupancy"][()].astype(np.float32),
            g["reflection_db"][()].astype(np.float32),
            g["transmission_db"][()].astype(np.float32),
            g["distance_m"][()].astype(np.float32),
        ]
    )
    pathloss = g["pathloss_db"][()].astype(np.float32)
    valid = (
        g["valid_mask"][()].astype(bool)
        if "valid_mask" in g
        else np.ones(pathloss.shape, dtype=bool)
    )
    scene = g.attrs["scene_id"]
    if isinstance(scene, bytes):
        scene = scene.decode()
    return Sample(
        sample_id=sample_id,
        scene_id=str(scene),
        features=features,
        fspl_db=g["fspl_db"][()].astype(np.float32),
        pathloss_db=pathloss,
        valid=valid,
        heights_m=np.array(g.attrs["heights_m"], dtype=np.float64),
        origin_m=np.array(g.attrs["origin_m"], dtype=np.float64),
        voxel_size_m=float(g.attrs["voxel_size_m"]),
    )


def list_sample_ids(path: str | Path) -> list[str]:
    with h5py.File(path, "r") as f:
        if "samples" not in f:
            raise DataError(f"{path}: no /samples group")
        return sorted(f["samples"].keys())


def load_samples(path: str | Path, ids: list[str] | None = None) -> list[Sample]:
    with h5py.File(path, "r") as f:
        if "samples" not in f:
            raise DataError(f"{path}: no /samples group")
        if ids is None:
            ids = sorted(f["samples"].keys())
        out = []
        for sid in ids:
            if sid not in f["samples"]:
                raise DataError(f"{path}: no sample {sid!r}")
            out.append(_read_group(sid, f["samples"][sid]))
        return out


@dataclass
class Manifest:
    train: list[tuple[str, str]]
    val: list[tuple[str, str]]
    test: list[tuple[str, str]]

    @staticmethod
    def load(path: str | Path) -> "Manifest":
        try:
            raw = json.loads(Path(path).read_text())
            def dec(items):
                return [(str(e["scene_id"]), str(e["sample_id"])) for e in items]
            return Manifest(dec(raw["train"]), dec(raw["val"]), dec(raw["test"]))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"bad manifest {path}: {exc}") from exc

    def ids(self, split: str) -> list[str]:
        try:
            pairs = getattr(self, split)
        except AttributeError:
            raise DataError(f"unknown split {split!r}") from None
        return [sid for _, sid in pairs]
