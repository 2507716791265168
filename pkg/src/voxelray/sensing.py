"""Depth-frame back-projection and multi-view fusion into labeled point clouds.

A sensed frame carries a metric depth raster (optical-axis distance, with 0 or
NaN meaning "no return"), a uint16 semantic-label raster, pinhole intrinsics,
and a camera-to-world pose.  Back-projection lifts valid pixels into the
camera frame, the pose maps them to world coordinates, and fusion concatenates
frames into one semantically labeled cloud.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError

logger = logging.getLogger(__name__)

# Semantic value reserved for pixels with no return; never a real label id.
INVALID_LABEL = 0xFFFF

_ORTHONORMAL_TOL = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise DomainError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DomainError(
                f"principal point ({self.cx}, {self.cy}) outside "
                f"{self.width}x{self.height} image"
            )


@dataclass
class CameraPose:
    """Camera-to-world rotation (3x3) and translation (3,) in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > _ORTHONORMAL_TOL:
            raise DomainError(f"rotation not orthonormal (max deviation {err:.2e})")
        det = float(np.linalg.det(self.rotation))
        if abs(det - 1.0) > _ORTHONORMAL_TOL:
            raise DomainError(f"rotation determinant {det:.8f} != +1")

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self) -> "CameraPose":
        r_inv = self.rotation.T
        return CameraPose(r_inv, -(r_inv @ self.translation))


@dataclass
class SensedFrame:
    depth: np.ndarray
    semantic: np.ndarray
    intrinsics: CameraIntrinsics
    pose: CameraPose
    label_names: dict[int, str] | None = None

    def __post_init__(self) -> None:
        self.depth = np.asarray(self.depth)
        self.semantic = np.asarray(self.semantic, dtype=np.uint16)
        shape = (self.intrinsics.height, self.intrinsics.width)
        if self.depth.shape != shape or self.semantic.shape != shape:
            raise DomainError(
                f"raster shapes {self.depth.shape}/{self.semantic.shape} "
                f"do not match intrinsics {shape}"
            )
        finite = self.depth[np.isfinite(self.depth)]
        if finite.size and finite.min() < 0:
            raise DomainError("negative depth values are not a valid encoding")


@dataclass
class SemanticPointCloud:
    points: np.ndarray          # (N, 3) float64, world frame
    labels: np.ndarray          # (N,) uint16
    label_names: dict[int, str] | None = None
    invalid_pixel_count: int = 0

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.uint16).reshape(-1)
        if len(self.points) != len(self.labels):
            raise DomainError("points and labels length mismatch")
        if self.points.size and not np.isfinite(self.points).all():
            raise DomainError("point cloud contains non-finite coordinates")

    def __len__(self) -> int:
        return len(self.points)


def back_project_frame(frame: SensedFrame) -> tuple[np.ndarray, np.ndarray, int]:
    """Lift valid pixels to camera-frame points.

    Returns ``(points_c, labels, n_invalid)`` where ``points_c`` is (N, 3)
    with x = (u - cx) * z / fx, y = (v - cy) * z / fy, and z the stored depth.
    Pixels with depth 0 or NaN are skipped and counted.
    """
    k = frame.intrinsics
    depth = frame.depth.astype(np.float64, copy=False)
    valid = np.isfinite(depth) & (depth > 0)
    n_invalid = int(valid.size - valid.sum())
    vs, us = np.nonzero(valid)
    z = depth[vs, us]
    x = (us - k.cx) * z / k.fx
    y = (vs - k.cy) * z / k.fy
    points = np.column_stack([x, y, z])
    return points, frame.semantic[vs, us], n_invalid


def project_points(points_c: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Inverse of back-projection: camera-frame points to (u, v, z)."""
    p = np.asarray(points_c, dtype=np.float64).reshape(-1, 3)
    if np.any(p[:, 2] <= 0):
        raise DomainError("cannot project points with non-positive depth")
    u = p[:, 0] * k.fx / p[:, 2] + k.cx
    v = p[:, 1] * k.fy / p[:, 2] + k.cy
    return np.column_stack([u, v, p[:, 2]])


def to_world(points_c: np.ndarray, pose: CameraPose) -> np.ndarray:
    """Map camera-frame points into world coordinates: R @ p + t per point."""
    return pose.apply(points_c)


def _merge_label_names(frames: list[SensedFrame]) -> dict[int, str] | None:
    merged: dict[int, str] = {}
    seen_any = False
    for f in frames:
        if f.label_names is None:
            continue
        seen_any = True
        for lid, name in f.label_names.items():
            if merged.setdefault(lid, name) != name:
                raise FormatError(f"label id {lid} maps to both {merged[lid]!r} and {name!r}")
    return merged if seen_any else None


def fuse(frames: list[SensedFrame], max_points: int | None = None) -> SemanticPointCloud:
    """Back-project every frame, transform to world, and concatenate.

    With ``max_points`` set and exceeded, the cloud is thinned by a
    deterministic stride (every k-th point) so repeat runs are identical.
    """
    if not frames:
        raise DomainError("fuse requires at least one frame")
    pts_parts, label_parts, n_invalid = [], [], 0
    for frame in frames:
        pts_c, labels, bad = back_project_frame(frame)
        pts_parts.append(to_world(pts_c, frame.pose))
        label_parts.append(labels)
        n_invalid += bad
    points = np.concatenate(pts_parts, axis=0)
    labels = np.concatenate(label_parts, axis=0)
    if max_points is not None and len(points) > max_points:
        stride = math.ceil(len(points) / max_points)
        points = points[::stride]
        labels = labels[::stride]
    return SemanticPointCloud(points, labels, _merge_label_names(frames), n_invalid)


# On-disk frame directory layout: per view a JSON sidecar, a raw little-endian
# float32 depth raster, and a raw uint16 semantic raster (both row-major,
# height x width).  An optional labels.json maps label ids to names.


def write_frames(directory: str | Path, frames: list[SensedFrame]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    label_names = _merge_label_names(frames)
    for i, frame in enumerate(frames):
        stem = f"view_{i:04d}"
        k = frame.intrinsics
        sidecar = {
            "width": k.width,
            "height": k.height,
            "fx": k.fx,
            "fy": k.fy,
            "cx": k.cx,
            "cy": k.cy,
            "rotation": [float(v) for v in frame.pose.rotation.reshape(-1)],
            "translation": [float(v) for v in frame.pose.translation],
        }
        (directory / f"{stem}.json").write_text(json.dumps(sidecar, indent=2))
        frame.depth.astype("<f4").tofile(directory / f"{stem}_depth.f32")
        frame.semantic.astype("<u2").tofile(directory / f"{stem}_semantic.u16")
    if label_names is not None:
        payload = {str(lid): name for lid, name in sorted(label_names.items())}
        (directory / "labels.json").write_text(json.dumps(payload, indent=2))


def read_frames(directory: str | Path) -> list[SensedFrame]:
    directory = Path(directory)
    sidecars = sorted(p for p in directory.glob("view_*.json"))
    if not sidecars:
        raise FormatError(f"no view sidecars found in {directory}")
    label_names = None
    labels_path = directory / "labels.json"
    if labels_path.exists():
        raw = json.loads(labels_path.read_text())
        label_names = {int(lid): str(name) for lid, name in raw.items()}
    frames = []
    for sidecar_path in sidecars:
        stem = sidecar_path.stem
        try:
            meta = json.loads(sidecar_path.read_text())
            k = CameraIntrinsics(
                fx=float(meta["fx"]), fy=float(meta["fy"]),
                cx=float(meta["cx"]), cy=float(meta["cy"]),
                width=int(meta["width"]), height=int(meta["height"]),
            )
            pose = CameraPose(
                np.array(meta["rotation"], dtype=np.float64).reshape(3, 3),
                np.array(meta["translation"], dtype=np.float64),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise FormatError(f"bad sidecar {sidecar_path.name}: {exc}") from exc
        n = k.width * k.height
        depth = np.fromfile(directory / f"{stem}_depth.f32", dtype="<f4")
        semantic = np.fromfile(directory / f"{stem}_semantic.u16", dtype="<u2")
        if depth.size != n or semantic.size != n:
            raise FormatError(
                f"{stem}: raster sizes {depth.size}/{semantic.size} != {k.width}x{k.height}"
            )
        frames.append(
            SensedFrame(
                depth.reshape(k.height, k.width),
                semantic.reshape(k.height, k.width),
                k,
                pose,
                label_names,
            )
        )
    return frames
