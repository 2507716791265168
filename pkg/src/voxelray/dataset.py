"""Sample/dataset HDF5 serialization, Tx sampling, rotation, and scene splits.

Dataset layout (format_version 1): one HDF5 file holds groups
``/samples/<id>/`` with datasets ``occupancy`` (uint8, Nx*Ny*Nz),
``reflection_db``/``transmission_db``/``distance_m`` (float32, Nx*Ny*Nz),
``tx_position_m`` (float32[3]), ``fspl_db``/``pathloss_db`` (float32,
levels*Nx*Ny), an optional ``valid_mask`` (uint8, levels*Nx*Ny), and group
attributes ``scene_id``, ``voxel_size_m``, ``frequency_hz``, ``origin_m``,
``heights_m``, ``rotation_k``, ``format_version``.  Datasets are written with
``track_times=False`` so byte-identical re-runs are possible.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import h5py
import numpy as np

from .errors import DomainError, FormatError, SamplingError
from .voxelizer import FeatureTensor, VoxelGrid
from .simulator import PathLossStack

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

_VOLUME_DATASETS = ("occupancy", "reflection_db", "transmission_db", "distance_m")
_STACK_DATASETS = ("fspl_db", "pathloss_db")
_REQUIRED_DATASETS = _VOLUME_DATASETS + ("tx_position_m",) + _STACK_DATASETS
_REQUIRED_ATTRS = (
    "scene_id", "voxel_size_m", "frequency_hz", "origin_m",
    "heights_m", "rotation_k", "format_version",
)


@dataclass
class DatasetSample:
    """One transmitter configuration: feature volumes, baselines, ground truth."""

    occupancy: np.ndarray         # (Nx, Ny, Nz) uint8
    reflection_db: np.ndarray     # (Nx, Ny, Nz) float32
    transmission_db: np.ndarray   # (Nx, Ny, Nz) float32
    distance_m: np.ndarray        # (Nx, Ny, Nz) float32
    tx_position_m: np.ndarray     # (3,) float32
    fspl_db: np.ndarray           # (levels, Nx, Ny) float32
    pathloss_db: np.ndarray       # (levels, Nx, Ny) float32
    scene_id: str
    voxel_size_m: float
    frequency_hz: float
    origin_m: np.ndarray          # (3,)
    heights_m: np.ndarray         # (levels,)
    rotation_k: int = 0
    valid_mask: np.ndarray | None = None   # (levels, Nx, Ny) uint8, optional

    def __post_init__(self) -> None:
        self.occupancy = np.asarray(self.occupancy, dtype=np.uint8)
        for name in ("reflection_db", "transmission_db", "distance_m"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float32))
        self.tx_position_m = np.asarray(self.tx_position_m, dtype=np.float32).reshape(3)
        self.fspl_db = np.asarray(self.fspl_db, dtype=np.float32)
        self.pathloss_db = np.asarray(self.pathloss_db, dtype=np.float32)
        self.origin_m = np.asarray(self.origin_m, dtype=np.float64).reshape(3)
        self.heights_m = np.asarray(self.heights_m, dtype=np.float64).reshape(-1)
        if self.valid_mask is not None:
            self.valid_mask = np.asarray(self.valid_mask, dtype=np.uint8)

        vol = self.occupancy.shape
        if len(vol) != 3:
            raise DomainError(f"volumes must be 3D, got {vol}")
        for name in ("reflection_db", "transmission_db", "distance_m"):
            if getattr(self, name).shape != vol:
                raise DomainError(f"{name} shape {getattr(self, name).shape} != {vol}")
        levels = len(self.heights_m)
        stack = (levels, vol[0], vol[1])
        for name in ("fspl_db", "pathloss_db"):
            if getattr(self, name).shape != stack:
                raise DomainError(f"{name} shape {getattr(self, name).shape} != {stack}")
        if self.valid_mask is not None and self.valid_mask.shape != stack:
            raise DomainError(f"valid_mask shape {self.valid_mask.shape} != {stack}")
        for name in ("reflection_db", "transmission_db", "distance_m", "fspl_db", "pathloss_db"):
            if not np.isfinite(getattr(self, name)).all():
                raise DomainError(f"{name} contains non-finite values")
        if self.rotation_k not in (0, 1, 2, 3):
            raise DomainError(f"rotation_k must be in 0..3, got {self.rotation_k}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.occupancy.shape


def sample_from_pipeline(
    features: FeatureTensor, stack: PathLossStack, scene_id: str
) -> DatasetSample:
    """Assemble a sample from the feature tensor and a gap-filled loss stack."""
    if np.isnan(stack.loss_db).any():
        raise DomainError("loss stack still has gaps; run fill_stack first")
    grid = features.grid
    return DatasetSample(
        occupancy=features.data[0].astype(np.uint8),
        reflection_db=features.data[1],
        transmission_db=features.data[2],
        distance_m=features.data[3],
        tx_position_m=features.tx_position,
        fspl_db=stack.fspl_db,
        pathloss_db=stack.loss_db,
        scene_id=scene_id,
        voxel_size_m=grid.voxel_size,
        frequency_hz=features.frequency_hz,
        origin_m=grid.origin,
        heights_m=stack.heights_m,
        valid_mask=stack.valid.astype(np.uint8),
    )


def _dataset_kwargs(compression: bool) -> dict:
    kw = {"track_times": False}
    if compression:
        kw.update(compression="gzip", compression_opts=4)
    return kw


def _write_group(group: h5py.Group, sample: DatasetSample, compression: bool) -> None:
    kw = _dataset_kwargs(compression)
    group.create_dataset("occupancy", data=sample.occupancy, **kw)
    group.create_dataset("reflection_db", data=sample.reflection_db, **kw)
    group.create_dataset("transmission_db", data=sample.transmission_db, **kw)
    group.create_dataset("distance_m", data=sample.distance_m, **kw)
    group.create_dataset("tx_position_m", data=sample.tx_position_m, track_times=False)
    group.create_dataset("fspl_db", data=sample.fspl_db, **kw)
    group.create_dataset("pathloss_db", data=sample.pathloss_db, **kw)
    if sample.valid_mask is not None:
        group.create_dataset("valid_mask", data=sample.valid_mask, **kw)
    group.attrs["scene_id"] = sample.scene_id
    group.attrs["voxel_size_m"] = float(sample.voxel_size_m)
    group.attrs["frequency_hz"] = float(sample.frequency_hz)
    group.attrs["origin_m"] = sample.origin_m
    group.attrs["heights_m"] = sample.heights_m
    group.attrs["rotation_k"] = int(sample.rotation_k)
    group.attrs["format_version"] = FORMAT_VERSION


def _read_group(group: h5py.Group) -> DatasetSample:
    for name in _REQUIRED_DATASETS:
        if name not in group:
            raise FormatError(f"missing dataset {name!r} in sample {group.name!r}")
    for name in _REQUIRED_ATTRS:
        if name not in group.attrs:
            raise FormatError(f"missing attribute {name!r} in sample {group.name!r}")
    version = int(group.attrs["format_version"])
    if version != FORMAT_VERSION:
        raise FormatError(f"format_version {version} != supported {FORMAT_VERSION}")
    scene_id = group.attrs["scene_id"]
    if isinstance(scene_id, bytes):
        scene_id = scene_id.decode()
    return DatasetSample(
        occupancy=group["occupancy"][()],
        reflection_db=group["reflection_db"][()],
        transmission_db=group["transmission_db"][()],
        distance_m=group["distance_m"][()],
        tx_position_m=group["tx_position_m"][()],
        fspl_db=group["fspl_db"][()],
        pathloss_db=group["pathloss_db"][()],
        valid_mask=group["valid_mask"][()] if "valid_mask" in group else None,
        scene_id=str(scene_id),
        voxel_size_m=float(group.attrs["voxel_size_m"]),
        frequency_hz=float(group.attrs["frequency_hz"]),
        origin_m=np.array(group.attrs["origin_m"], dtype=np.float64),
        heights_m=np.array(group.attrs["heights_m"], dtype=np.float64),
        rotation_k=int(group.attrs["rotation_k"]),
    )


def write_sample(
    sample: DatasetSample,
    target: str | Path | h5py.Group,
    sample_id: str = "0",
    compression: bool = False,
) -> None:
    """Write one sample to ``/samples/<id>/`` of a file path or an open group."""
    if isinstance(target, h5py.Group):
        _write_group(target.require_group(f"samples/{sample_id}"), sample, compression)
        return
    with h5py.File(target, "a") as f:
        _write_group(f.require_group(f"samples/{sample_id}"), sample, compression)


def read_sample(source: str | Path | h5py.Group, sample_id: str | None = None) -> DatasetSample:
    """Read one sample; with ``sample_id`` None the file must hold exactly one."""
    if isinstance(source, h5py.Group):
        return _read_group(source)
    with h5py.File(source, "r") as f:
        if "samples" not in f:
            raise FormatError(f"{source}: no /samples group")
        ids = sorted(f["samples"].keys())
        if sample_id is None:
            if len(ids) != 1:
                raise FormatError(f"{source}: expected one sample, found {len(ids)}")
            sample_id = ids[0]
        if sample_id not in f["samples"]:
            raise FormatError(f"{source}: no sample {sample_id!r}")
        return _read_group(f["samples"][sample_id])


def list_samples(path: str | Path) -> list[str]:
    with h5py.File(path, "r") as f:
        if "samples" not in f:
            raise FormatError(f"{path}: no /samples group")
        return sorted(f["samples"].keys())


def read_all_samples(path: str | Path) -> dict[str, DatasetSample]:
    with h5py.File(path, "r") as f:
        if "samples" not in f:
            raise FormatError(f"{path}: no /samples group")
        return {sid: _read_group(f["samples"][sid]) for sid in sorted(f["samples"].keys())}


# Voxel-grid exchange files (used by the CLI between voxelize and simulate).

def write_grid(grid: VoxelGrid, path: str | Path) -> None:
    with h5py.File(path, "w") as f:
        f.create_dataset("occupancy", data=grid.occupancy.astype(np.uint8), track_times=False)
        f.create_dataset("material", data=grid.material, track_times=False)
        f.attrs["origin_m"] = grid.origin
        f.attrs["voxel_size_m"] = float(grid.voxel_size)
        f.attrs["material_names"] = json.dumps(grid.material_names)
        f.attrs["dropped_points"] = int(grid.dropped_points)
        f.attrs["format_version"] = FORMAT_VERSION


def read_grid(path: str | Path) -> VoxelGrid:
    with h5py.File(path, "r") as f:
        for name in ("occupancy", "material"):
            if name not in f:
                raise FormatError(f"{path}: missing dataset {name!r}")
        for name in ("origin_m", "voxel_size_m", "material_names"):
            if name not in f.attrs:
                raise FormatError(f"{path}: missing attribute {name!r}")
        return VoxelGrid(
            origin=np.array(f.attrs["origin_m"], dtype=np.float64),
            voxel_size=float(f.attrs["voxel_size_m"]),
            occupancy=f["occupancy"][()].astype(bool),
            material=f["material"][()],
            material_names=list(json.loads(f.attrs["material_names"])),
            dropped_points=int(f.attrs.get("dropped_points", 0)),
        )


def sample_tx(
    grid: VoxelGrid,
    n: int,
    seed: int,
    height_range_m: tuple[float, float] = (1.0, 2.5),
) -> np.ndarray:
    """Draw ``n`` distinct free-space voxel centers as Tx positions.

    Candidates are unoccupied voxels whose center height falls inside
    ``height_range_m``; the draw is uniform without replacement and
    deterministic for a seed.
    """
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    zc = grid.axis_centers(2)
    z_ok = (zc >= height_range_m[0]) & (zc <= height_range_m[1])
    candidates = np.argwhere(~grid.occupancy & z_ok[None, None, :])
    if len(candidates) < n:
        raise SamplingError(
            f"only {len(candidates)} free voxels in the height band, need {n}"
        )
    rng = np.random.default_rng(seed)
    rows = rng.choice(len(candidates), size=n, replace=False)
    return grid.index_to_center(candidates[rows])


def _rotate_volume_90(volume: np.ndarray) -> np.ndarray:
    # One quarter turn in the XY plane: new[y, Nx-1-x, z] = old[x, y, z].
    return np.ascontiguousarray(np.transpose(volume, (1, 0, 2))[:, ::-1, :])


def _rotate_stack_90(stack: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.transpose(stack, (0, 2, 1))[:, :, ::-1])


def rotate_sample(sample: DatasetSample, k: int) -> DatasetSample:
    """Rotate a sample by k quarter-turns in the XY plane.

    Volumes and stacks are pure index permutations; the Tx position rotates
    about the grid's horizontal center so rotated grids stay index-aligned
    (the origin is unchanged, dims swap for odd k).  Distances are preserved
    exactly, so distance_m and fspl_db rotate rather than being recomputed.
    """
    if k not in (1, 2, 3):
        raise DomainError(f"k must be 1, 2, or 3 quarter-turns, got {k}")
    out = sample
    for _ in range(k):
        nx = out.dims[0]
        h = out.voxel_size_m
        ox, oy = out.origin_m[0], out.origin_m[1]
        tx, ty, tz = (float(v) for v in out.tx_position_m)
        new_tx = np.array([ox + (ty - oy), oy + nx * h - (tx - ox), tz], dtype=np.float32)
        out = replace(
            out,
            occupancy=_rotate_volume_90(out.occupancy),
            reflection_db=_rotate_volume_90(out.reflection_db),
            transmission_db=_rotate_volume_90(out.transmission_db),
            distance_m=_rotate_volume_90(out.distance_m),
            fspl_db=_rotate_stack_90(out.fspl_db),
            pathloss_db=_rotate_stack_90(out.pathloss_db),
            valid_mask=None if out.valid_mask is None else _rotate_stack_90(out.valid_mask),
            tx_position_m=new_tx,
            rotation_k=(out.rotation_k + 1) % 4,
        )
    return out


@dataclass
class SplitManifest:
    train: list[tuple[str, str]]   # (scene_id, sample_id)
    val: list[tuple[str, str]]
    test: list[tuple[str, str]]

    def validate(self) -> None:
        train_scenes = {s for s, _ in self.train}
        val_scenes = {s for s, _ in self.val}
        test_scenes = {s for s, _ in self.test}
        if not val_scenes <= train_scenes:
            raise DomainError("validation scenes must be a subset of training scenes")
        if test_scenes & train_scenes:
            raise DomainError("test scenes must be disjoint from training scenes")
        all_pairs = self.train + self.val + self.test
        if len(set(all_pairs)) != len(all_pairs):
            raise DomainError("a (scene, sample) pair appears in two splits")
        train_tx = {(s, t) for s, t in self.train}
        if train_tx & set(self.val):
            raise DomainError("validation samples overlap training samples")

    def to_json(self) -> str:
        def enc(pairs):
            return [{"scene_id": s, "sample_id": t} for s, t in pairs]
        return json.dumps(
            {"train": enc(self.train), "val": enc(self.val), "test": enc(self.test)},
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "SplitManifest":
        try:
            raw = json.loads(text)
            def dec(items):
                return [(str(e["scene_id"]), str(e["sample_id"])) for e in items]
            return SplitManifest(dec(raw["train"]), dec(raw["val"]), dec(raw["test"]))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise FormatError(f"bad split manifest: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @staticmethod
    def load(path: str | Path) -> "SplitManifest":
        return SplitManifest.from_json(Path(path).read_text())


def split_scenes(
    scene_samples: dict[str, list[str]],
    seed: int,
    test_scenes: int = 1,
    val_fraction: float = 0.2,
) -> SplitManifest:
    """Scene-level split: held-out scenes form the test set (unknown geometry);
    each remaining scene's samples split train/val (known geometry, unknown Tx).

    Deterministic for a seed; every non-test scene keeps at least one
    training sample so validation scenes stay a subset of training scenes.
    """
    scenes = sorted(scene_samples)
    if len(scenes) < 2:
        raise DomainError(f"need at least 2 scenes to split, got {len(scenes)}")
    if not 1 <= test_scenes <= len(scenes) - 1:
        raise DomainError(
            f"test_scenes={test_scenes} must leave at least one training scene"
        )
    if not 0.0 <= val_fraction < 1.0:
        raise DomainError(f"val_fraction must be in [0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(scenes))
    held_out = {scenes[i] for i in order[:test_scenes]}

    train: list[tuple[str, str]] = []
    val: list[tuple[str, str]] = []
    test: list[tuple[str, str]] = []
    for scene in scenes:
        samples = sorted(scene_samples[scene])
        if scene in held_out:
            test.extend((scene, s) for s in samples)
            continue
        perm = rng.permutation(len(samples))
        n_val = min(int(round(val_fraction * len(samples))), len(samples) - 1)
        val_idx = set(perm[:n_val].tolist())
        for i, s in enumerate(samples):
            (val if i in val_idx else train).append((scene, s))
    manifest = SplitManifest(train=train, val=val, test=test)
    manifest.validate()
    return manifest
