"""Voxel grids, the 4-channel physics feature tensor, and the free-space baseline.

Grid convention: axes are (x, y, z) with z vertical, arrays indexed
``[ix, iy, iz]``.  Voxel ``(i, j, k)`` covers the half-open box
``origin + [i, i+1) * h`` per axis, so a point exactly on a face belongs to
the higher-index voxel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .materials import DB_FLOOR, MaterialTable, feature_arrays
from .sensing import SemanticPointCloud

logger = logging.getLogger(__name__)

DEFAULT_VOXEL_SIZE_M = 0.1

# Constant term of the free-space loss expression (d in meters, f in hertz):
# L = 20*log10(d) + 20*log10(f) + FSPL_CONST_DB.
FSPL_CONST_DB = -147.55

FREE_MATERIAL = -1


@dataclass
class VoxelGrid:
    origin: np.ndarray          # world position of voxel (0,0,0) corner
    voxel_size: float
    occupancy: np.ndarray       # (Nx, Ny, Nz) bool
    material: np.ndarray        # (Nx, Ny, Nz) int16, FREE_MATERIAL where free
    material_names: list[str]   # material id -> name
    dropped_points: int = 0

    def __post_init__(self) -> None:
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if self.voxel_size <= 0:
            raise DomainError(f"voxel size must be positive, got {self.voxel_size}")
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        self.material = np.asarray(self.material, dtype=np.int16)
        if self.occupancy.ndim != 3 or min(self.occupancy.shape) < 1:
            raise DomainError(f"grid dims must be >= 1 per axis, got {self.occupancy.shape}")
        if self.material.shape != self.occupancy.shape:
            raise DomainError("material and occupancy shapes differ")
        if np.any(self.material[self.occupancy] < 0):
            raise DomainError("occupied voxels must carry a material id")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.occupancy.shape

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        upper = self.origin + np.array(self.dims) * self.voxel_size
        return self.origin.copy(), upper

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        lo, hi = self.bounds
        return np.all((p >= lo) & (p < hi), axis=1)

    def world_to_index(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.floor((p - self.origin) / self.voxel_size).astype(np.int64)

    def index_to_center(self, indices: np.ndarray) -> np.ndarray:
        idx = np.atleast_2d(np.asarray(indices, dtype=np.float64))
        return self.origin + (idx + 0.5) * self.voxel_size

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.dims[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.voxel_size


@dataclass
class FeatureTensor:
    """Model input: (4, Nx, Ny, Nz) float32 with channels
    (occupancy, reflection dB, transmission dB, Tx distance m)."""

    data: np.ndarray
    tx_position: np.ndarray
    frequency_hz: float
    grid: VoxelGrid

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float32)
        self.tx_position = np.asarray(self.tx_position, dtype=np.float64).reshape(3)
        if self.data.ndim != 4 or self.data.shape[0] != 4:
            raise DomainError(f"feature tensor must be (4, Nx, Ny, Nz), got {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise DomainError("feature tensor contains non-finite values")


@dataclass
class FsplVolume:
    data: np.ndarray            # (Nx, Ny, Nz) float32, dB
    tx_position: np.ndarray
    frequency_hz: float

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float32)
        self.tx_position = np.asarray(self.tx_position, dtype=np.float64).reshape(3)


def fspl_db(distance_m, f_hz: float):
    """Free-space path loss in dB; accepts scalars or arrays."""
    if f_hz <= 0:
        raise DomainError(f"frequency must be positive, got {f_hz} Hz")
    d = np.asarray(distance_m, dtype=np.float64)
    if np.any(d <= 0):
        raise DomainError("free-space loss requires positive distance")
    out = 20.0 * np.log10(d) + 20.0 * np.log10(f_hz) + FSPL_CONST_DB
    return float(out) if np.isscalar(distance_m) else out


def voxelize_cloud(
    cloud: SemanticPointCloud,
    voxel_size: float,
    bounds: tuple[np.ndarray, np.ndarray],
    table: MaterialTable,
    min_points: int = 1,
) -> VoxelGrid:
    """Scatter a labeled cloud into an occupancy + material grid.

    A voxel is occupied once it holds at least ``min_points`` points; its
    material is the majority vote over the points' material ids with ties
    broken toward the lowest id.  Points outside ``bounds`` are dropped and
    counted on the returned grid.
    """
    if voxel_size <= 0:
        raise DomainError(f"voxel size must be positive, got {voxel_size}")
    if len(cloud) == 0:
        raise DomainError("cannot voxelize an empty cloud")
    origin = np.asarray(bounds[0], dtype=np.float64).reshape(3)
    upper = np.asarray(bounds[1], dtype=np.float64).reshape(3)
    if np.any(upper <= origin):
        raise DomainError("bounds upper corner must exceed origin")
    dims = np.ceil((upper - origin) / voxel_size - 1e-9).astype(int)
    dims = np.maximum(dims, 1)

    idx = np.floor((cloud.points - origin) / voxel_size).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < dims), axis=1)
    dropped = int(len(idx) - inside.sum())
    if dropped:
        logger.warning("dropping %d points outside the voxelization bounds", dropped)
    if dropped == len(idx):
        raise DomainError("all points fall outside the voxelization bounds")
    idx = idx[inside]

    # Map semantic label ids -> material ids through the table (unknown labels
    # fall back to the table default and bump its warning counter).
    labels = cloud.labels[inside]
    names = cloud.label_names or {}
    unique_labels = np.unique(labels)
    lut = np.zeros(int(unique_labels.max()) + 1 if unique_labels.size else 1, dtype=np.int64)
    for lid in unique_labels:
        lut[lid] = table.material_id(names.get(int(lid), f"label_{lid}"))
    mat_ids = lut[labels]

    flat = (idx[:, 0] * dims[1] + idx[:, 1]) * dims[2] + idx[:, 2]
    occ_flat, occ_counts = np.unique(flat, return_counts=True)
    occupied_flat = occ_flat[occ_counts >= min_points]

    # Majority vote per voxel: count (voxel, material) pairs, then order by
    # (voxel, -count, material) and keep the first row per voxel.
    n_mats = len(table.materials)
    pair_key = flat * n_mats + mat_ids
    pair_unique, pair_counts = np.unique(pair_key, return_counts=True)
    pv = pair_unique // n_mats
    pm = pair_unique % n_mats
    order = np.lexsort((pm, -pair_counts, pv))
    pv, pm = pv[order], pm[order]
    first = np.unique(pv, return_index=True)[1]
    winner = dict(zip(pv[first].tolist(), pm[first].tolist()))

    occupancy = np.zeros(tuple(dims), dtype=bool)
    material = np.full(tuple(dims), FREE_MATERIAL, dtype=np.int16)
    ii = np.unravel_index(occupied_flat, tuple(dims))
    occupancy[ii] = True
    material[ii] = np.array([winner[int(f)] for f in occupied_flat], dtype=np.int16)
    return VoxelGrid(origin, voxel_size, occupancy, material, list(table.names), dropped)


def distance_volume(grid: VoxelGrid, tx: np.ndarray) -> np.ndarray:
    """Euclidean distance from each voxel center to the Tx, clamped below at
    half a voxel so the co-located voxel stays finite."""
    tx = np.asarray(tx, dtype=np.float64).reshape(3)
    cx = grid.axis_centers(0)[:, None, None]
    cy = grid.axis_centers(1)[None, :, None]
    cz = grid.axis_centers(2)[None, None, :]
    d = np.sqrt((cx - tx[0]) ** 2 + (cy - tx[1]) ** 2 + (cz - tx[2]) ** 2)
    return np.maximum(d, grid.voxel_size / 2.0)


def build_feature_tensor(
    grid: VoxelGrid,
    table: MaterialTable,
    f_hz: float,
    tx: np.ndarray,
    db_floor: float = DB_FLOOR,
) -> FeatureTensor:
    """Assemble the 4-channel input volume for one transmitter position.

    Free voxels carry vacuum-consistent features (reflection at the dB floor,
    transmission 0 dB); occupied voxels carry their material's coefficients.
    """
    tx = np.asarray(tx, dtype=np.float64).reshape(3)
    if not bool(grid.contains(tx)[0]):
        raise DomainError(f"tx {tx.tolist()} outside grid bounds")
    rho, tau = feature_arrays(table, f_hz, db_floor)
    if len(grid.material_names) > len(rho):
        raise DomainError("grid references more materials than the table provides")

    occ = grid.occupancy
    ch_rho = np.full(grid.dims, db_floor, dtype=np.float64)
    ch_tau = np.zeros(grid.dims, dtype=np.float64)
    mats = grid.material[occ]
    ch_rho[occ] = rho[mats]
    ch_tau[occ] = tau[mats]
    data = np.stack(
        [occ.astype(np.float64), ch_rho, ch_tau, distance_volume(grid, tx)]
    ).astype(np.float32)
    return FeatureTensor(data, tx, f_hz, grid)


def fspl_volume(grid: VoxelGrid, tx: np.ndarray, f_hz: float) -> FsplVolume:
    """Free-space loss at every voxel center, same distance clamp as the
    feature tensor's distance channel."""
    tx = np.asarray(tx, dtype=np.float64).reshape(3)
    if not bool(grid.contains(tx)[0]):
        raise DomainError(f"tx {tx.tolist()} outside grid bounds")
    d = distance_volume(grid, tx)
    return FsplVolume(fspl_db(d, f_hz).astype(np.float32), tx, f_hz)
