"""Procedural box-world indoor scenes and a ray-cast depth/semantic scanner.

Scenes are unions of axis-aligned, grid-snapped boxes (floor, ceiling,
perimeter walls, doorway partitions, furniture), which keeps ray
intersections analytic and lets the scanner, the voxelizer, and the
propagation oracle be verified against each other exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DomainError, FormatError, GenerationError, RenderError
from .sensing import INVALID_LABEL, CameraIntrinsics, CameraPose, SensedFrame
from .voxelizer import FREE_MATERIAL, DEFAULT_VOXEL_SIZE_M, VoxelGrid
from .materials import MaterialTable, default_table

GRID_SNAP_M = DEFAULT_VOXEL_SIZE_M

# Relative along-ray bias applied to rendered depths so back-projected points
# land just inside the hit element instead of exactly on the (grid-aligned)
# face, where floor() would assign them to the free neighbor voxel.
DEPTH_BIAS_REL = 1e-4


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self) -> None:
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise DomainError(f"degenerate box {self.lo} .. {self.hi}")

    @staticmethod
    def of(lo, hi) -> "Box":
        return Box(tuple(float(v) for v in lo), tuple(float(v) for v in hi))

    def contains(self, p) -> bool:
        return all(l <= c < h for l, c, h in zip(self.lo, p, self.hi))

    def inside(self, other: "Box") -> bool:
        return all(ol <= l and h <= oh for l, h, ol, oh in zip(self.lo, self.hi, other.lo, other.hi))

    def overlaps(self, other: "Box") -> bool:
        return all(l < oh and ol < h for l, h, ol, oh in zip(self.lo, self.hi, other.lo, other.hi))


@dataclass(frozen=True)
class SceneElement:
    box: Box
    label: str


@dataclass
class SceneDescription:
    bounds: Box
    elements: list[SceneElement]
    seed: int

    def __post_init__(self) -> None:
        labels = {e.label for e in self.elements}
        if "floor" not in labels or "ceiling" not in labels:
            raise DomainError("scene must contain floor and ceiling elements")
        for e in self.elements:
            if not e.box.inside(self.bounds):
                raise DomainError(f"element {e.label} at {e.box.lo} exceeds scene bounds")

    def label_names(self) -> list[str]:
        """Label registry in order of first appearance; index is the label id."""
        seen: list[str] = []
        for e in self.elements:
            if e.label not in seen:
                seen.append(e.label)
        return seen

    def to_json(self) -> str:
        return json.dumps(
            {
                "bounds": {"min": list(self.bounds.lo), "max": list(self.bounds.hi)},
                "elements": [
                    {"min": list(e.box.lo), "max": list(e.box.hi), "label": e.label}
                    for e in self.elements
                ],
                "seed": self.seed,
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "SceneDescription":
        try:
            raw = json.loads(text)
            bounds = Box.of(raw["bounds"]["min"], raw["bounds"]["max"])
            elements = [
                SceneElement(Box.of(e["min"], e["max"]), str(e["label"]))
                for e in raw["elements"]
            ]
            return SceneDescription(bounds, elements, int(raw["seed"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad scene JSON: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @staticmethod
    def load(path: str | Path) -> "SceneDescription":
        return SceneDescription.from_json(Path(path).read_text())


@dataclass
class GenParams:
    rooms: tuple[int, int] = (1, 3)              # inclusive room-count range
    room_width_m: tuple[float, float] = (3.0, 4.6)
    depth_m: tuple[float, float] = (3.0, 4.2)
    ceiling_height_m: float = 2.8
    wall_thickness_m: float = 0.1
    doorway_width_m: float = 0.9
    doorway_height_m: float = 2.0
    furniture_density: float = 0.12              # pieces per square meter of room

    def __post_init__(self) -> None:
        if self.rooms[0] < 1 or self.rooms[1] < self.rooms[0]:
            raise DomainError(f"bad room count range {self.rooms}")
        for name, (lo, hi) in (("room_width_m", self.room_width_m), ("depth_m", self.depth_m)):
            if lo <= 0 or hi < lo:
                raise DomainError(f"bad {name} range ({lo}, {hi})")
        if self.wall_thickness_m < GRID_SNAP_M:
            raise DomainError("wall thickness must be at least one voxel (0.1 m)")
        if self.furniture_density < 0:
            raise DomainError("furniture density must be non-negative")


# Furniture catalog: label -> ((w_lo, w_hi), (d_lo, d_hi), (h_lo, h_hi)).
# Wall pieces go flush against a perimeter wall (their back face is buried in
# the box union, like real casework); floating pieces stand free.
_WALL_FURNITURE = {
    "wardrobe": ((0.9, 1.3), (0.5, 0.7), (1.8, 2.0)),
    "cabinet": ((0.5, 0.9), (0.4, 0.6), (0.9, 1.2)),
    "counter": ((1.2, 1.8), (0.5, 0.7), (0.8, 1.0)),
}
_FLOAT_FURNITURE = {
    "bed": ((1.6, 2.0), (0.9, 1.4), (0.4, 0.6)),
    "table": ((0.7, 1.2), (0.7, 1.2), (0.7, 0.8)),
}
_WALL_ORDER = list(_WALL_FURNITURE)
_FLOAT_ORDER = list(_FLOAT_FURNITURE)


def _snap(value: float) -> float:
    return round(round(value / GRID_SNAP_M) * GRID_SNAP_M, 6)


def gen_scene(seed: int, params: GenParams | None = None) -> SceneDescription:
    """Deterministically generate a multi-room scene for one seed.

    Rooms are laid out in a row along x, separated by plasterboard partitions
    with doorway gaps (lintel above door height).  Furniture is placed by
    rejection sampling with clearance from walls and the scan ring.
    """
    params = params or GenParams()
    rng = np.random.default_rng(seed)
    t = _snap(params.wall_thickness_m)
    hc = _snap(params.ceiling_height_m)
    if hc < 1.0 + 2 * t:
        raise GenerationError(f"ceiling height {hc} m leaves no interior")

    n_rooms = int(rng.integers(params.rooms[0], params.rooms[1] + 1))
    widths = [_snap(rng.uniform(*params.room_width_m)) for _ in range(n_rooms)]
    depth = _snap(rng.uniform(*params.depth_m))
    total_w = _snap(sum(widths) + 2 * t + (n_rooms - 1) * t)
    total_d = _snap(depth + 2 * t)
    bounds = Box.of((0.0, 0.0, 0.0), (total_w, total_d, hc))

    elements: list[SceneElement] = [
        SceneElement(Box.of((0, 0, 0), (total_w, total_d, t)), "floor"),
        SceneElement(Box.of((0, 0, hc - t), (total_w, total_d, hc)), "ceiling"),
        SceneElement(Box.of((0, 0, 0), (t, total_d, hc)), "wall"),
        SceneElement(Box.of((total_w - t, 0, 0), (total_w, total_d, hc)), "wall"),
        SceneElement(Box.of((0, 0, 0), (total_w, t, hc)), "wall"),
        SceneElement(Box.of((0, total_d - t, 0), (total_w, total_d, hc)), "wall"),
    ]

    # Interior partitions with doorway gaps.
    room_x: list[tuple[float, float]] = []
    x = t
    for i, w in enumerate(widths):
        room_x.append((_snap(x), _snap(x + w)))
        x += w
        if i < n_rooms - 1:
            px = _snap(x)
            gap_w = _snap(params.doorway_width_m)
            gy_lo = _snap(rng.uniform(t + 0.3, total_d - t - 0.3 - gap_w))
            gy_hi = _snap(gy_lo + gap_w)
            door_top = _snap(t + params.doorway_height_m)
            if gy_lo > t:
                elements.append(
                    SceneElement(Box.of((px, t, t), (px + t, gy_lo, hc - t)), "partition")
                )
            if gy_hi < total_d - t:
                elements.append(
                    SceneElement(Box.of((px, gy_hi, t), (px + t, total_d - t, hc - t)), "partition")
                )
            if door_top < hc - t:
                elements.append(
                    SceneElement(Box.of((px, gy_lo, door_top), (px + t, gy_hi, hc - t)), "lintel")
                )
            x += t

    # Furniture, clear of the scan ring at each room's center.
    for rx_lo, rx_hi in room_x:
        area = (rx_hi - rx_lo) * depth
        n_pieces = min(int(round(params.furniture_density * area)), 6)
        cx, cy = (rx_lo + rx_hi) / 2, total_d / 2
        ring_clear = 0.30 * min(rx_hi - rx_lo, depth) / 2 + 0.4
        placed: list[Box] = []

        def try_place(box: Box, label: str) -> bool:
            bcx = (box.lo[0] + box.hi[0]) / 2
            bcy = (box.lo[1] + box.hi[1]) / 2
            half = max(box.hi[0] - box.lo[0], box.hi[1] - box.lo[1]) / 2
            if math.hypot(bcx - cx, bcy - cy) < ring_clear + half:
                return False
            if any(box.overlaps(p) for p in placed):
                return False
            placed.append(box)
            elements.append(SceneElement(box, label))
            return True

        for _ in range(n_pieces):
            against_wall = rng.random() < 0.5
            if against_wall:
                label = _WALL_ORDER[int(rng.integers(len(_WALL_ORDER)))]
                (w_r, d_r, h_r) = _WALL_FURNITURE[label]
            else:
                label = _FLOAT_ORDER[int(rng.integers(len(_FLOAT_ORDER)))]
                (w_r, d_r, h_r) = _FLOAT_FURNITURE[label]
            w = _snap(rng.uniform(*w_r))
            d = _snap(rng.uniform(*d_r))
            h = _snap(rng.uniform(*h_r))
            margin = 0.4 if against_wall else 0.3
            if w >= rx_hi - rx_lo - 2 * margin or d >= depth - 2 * margin:
                raise GenerationError(f"furniture {label} ({w}x{d} m) does not fit the room")
            for _attempt in range(40):
                if against_wall:
                    # back face touches the north or south wall's inner surface
                    side = int(rng.integers(2))
                    bx = _snap(rng.uniform(rx_lo + margin, rx_hi - margin - w))
                    by = t if side == 0 else _snap(total_d - t - d)
                    box = Box.of((bx, by, t), (bx + w, by + d, t + h))
                else:
                    bx = _snap(rng.uniform(rx_lo + margin, rx_hi - margin - w))
                    by = _snap(rng.uniform(t + margin, total_d - t - margin - d))
                    box = Box.of((bx, by, t), (bx + w, by + d, t + h))
                if try_place(box, label):
                    break

    return SceneDescription(bounds, elements, seed)


@dataclass
class ScanPlan:
    poses: list[CameraPose]
    intrinsics: CameraIntrinsics


def default_intrinsics(width: int = 320, height: int = 240, hfov_deg: float = 90.0) -> CameraIntrinsics:
    f = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
    return CameraIntrinsics(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                            width=width, height=height)


def _look_pose(position: np.ndarray, yaw: float, pitch: float) -> CameraPose:
    """Camera-to-world pose for a camera at `position` looking along `yaw`
    (about +z, from +x) with `pitch` above the horizon.  Camera axes follow
    the image convention: x right, y down, z forward."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    forward = np.array([cy * cp, sy * cp, sp])
    right = np.array([-sy, cy, 0.0])
    down = np.cross(forward, right)
    rotation = np.column_stack([right, down, forward])
    return CameraPose(rotation, position)


def _room_cores(scene: SceneDescription, z: float, cell: float = GRID_SNAP_M):
    """Connected room cores on a horizontal slice.

    The free mask is eroded by ~0.5 m first so doorway throats pinch off and
    each room yields its own core, with built-in clearance for camera rings.
    """
    nx = int(round((scene.bounds.hi[0] - scene.bounds.lo[0]) / cell))
    ny = int(round((scene.bounds.hi[1] - scene.bounds.lo[1]) / cell))
    occupied = np.zeros((nx, ny), dtype=bool)
    for e in scene.elements:
        if e.box.lo[2] <= z < e.box.hi[2]:
            i0 = int(round((e.box.lo[0] - scene.bounds.lo[0]) / cell))
            i1 = int(round((e.box.hi[0] - scene.bounds.lo[0]) / cell))
            j0 = int(round((e.box.lo[1] - scene.bounds.lo[1]) / cell))
            j1 = int(round((e.box.hi[1] - scene.bounds.lo[1]) / cell))
            occupied[max(i0, 0):min(i1, nx), max(j0, 0):min(j1, ny)] = True
    core = ndimage.binary_erosion(~occupied, iterations=int(round(0.5 / cell)))
    labels, n = ndimage.label(core)
    return labels, n


def make_scan_plan(
    scene: SceneDescription,
    views_per_room: int = 12,
    ring_height_m: float = 1.5,
    ring_radius_frac: float = 0.35,
    intrinsics: CameraIntrinsics | None = None,
) -> ScanPlan:
    """Place a walkthrough-style camera ring in each room.

    Level views sit on a wide ring looking inward across the room, which
    covers walls from the far side and furniture from all azimuths; four
    pitched views near the ring center cover floor and ceiling.
    """
    if views_per_room < 6:
        raise DomainError("need at least 6 views per room")
    intrinsics = intrinsics or default_intrinsics()
    labels, n_regions = _room_cores(scene, ring_height_m)
    if n_regions == 0:
        raise GenerationError("no free space at the requested scan height")
    poses: list[CameraPose] = []
    for region in range(1, n_regions + 1):
        ii, jj = np.nonzero(labels == region)
        if ii.size * GRID_SNAP_M**2 < 0.25:  # skip slivers under 0.25 m^2
            continue
        cx = scene.bounds.lo[0] + (ii.mean() + 0.5) * GRID_SNAP_M
        cy = scene.bounds.lo[1] + (jj.mean() + 0.5) * GRID_SNAP_M
        half_x = (np.ptp(ii) + 1) * GRID_SNAP_M / 2.0
        half_y = (np.ptp(jj) + 1) * GRID_SNAP_M / 2.0

        def ring_pos(yaw: float, frac: float) -> np.ndarray:
            pos = np.array(
                [cx + 2 * frac * half_x * math.cos(yaw),
                 cy + 2 * frac * half_y * math.sin(yaw),
                 ring_height_m]
            )
            # retreat toward the core center until clear of geometry
            for _ in range(8):
                core_ok = False
                gi = int((pos[0] - scene.bounds.lo[0]) / GRID_SNAP_M)
                gj = int((pos[1] - scene.bounds.lo[1]) / GRID_SNAP_M)
                if 0 <= gi < labels.shape[0] and 0 <= gj < labels.shape[1]:
                    core_ok = labels[gi, gj] == region
                if core_ok and not any(e.box.contains(pos) for e in scene.elements):
                    return pos
                pos = pos + 0.25 * (np.array([cx, cy, ring_height_m]) - pos)
            return np.array([cx, cy, ring_height_m])

        n_level = views_per_room - 4
        for k in range(n_level):
            yaw = 2 * math.pi * k / n_level
            # stand on the ring, look inward (through the room center)
            poses.append(_look_pose(ring_pos(yaw, ring_radius_frac), yaw + math.pi, 0.0))
        pitched = [(0.0, -1.0), (math.pi, -1.0), (math.pi / 2, 1.0), (3 * math.pi / 2, 1.0)]
        for yaw, pitch in pitched:
            poses.append(_look_pose(ring_pos(yaw + math.pi / 4, 0.15), yaw, pitch))
    if not poses:
        raise GenerationError("no free-space region large enough for a scan ring")
    return ScanPlan(poses=poses, intrinsics=intrinsics)


def render_views(
    scene: SceneDescription,
    plan: ScanPlan,
    depth_bias_rel: float = DEPTH_BIAS_REL,
    near: float = 1e-6,
) -> list[SensedFrame]:
    """Ray-cast every planned view against the scene's boxes.

    Depth is the optical-axis distance to the nearest hit, scaled by
    ``1 + depth_bias_rel`` (see DEPTH_BIAS_REL); pixels that escape the scene
    get depth 0 and the INVALID_LABEL semantic value.
    """
    registry = scene.label_names()
    label_ids = {name: i for i, name in enumerate(registry)}
    label_names = dict(enumerate(registry))
    boxes_lo = np.array([e.box.lo for e in scene.elements])
    boxes_hi = np.array([e.box.hi for e in scene.elements])
    box_labels = np.array([label_ids[e.label] for e in scene.elements], dtype=np.uint16)

    k = plan.intrinsics
    us, vs = np.meshgrid(np.arange(k.width), np.arange(k.height))
    dirs_c = np.stack(
        [(us - k.cx) / k.fx, (vs - k.cy) / k.fy, np.ones_like(us, dtype=np.float64)], axis=-1
    )

    frames = []
    for pose in plan.poses:
        origin = pose.translation
        inside = [e.label for e in scene.elements if e.box.contains(origin)]
        if inside:
            raise RenderError(f"camera at {origin.tolist()} is inside element {inside[0]!r}")
        dirs_w = dirs_c @ pose.rotation.T  # (H, W, 3); t parameter = optical-axis depth
        best_t = np.full((k.height, k.width), np.inf)
        best_label = np.full((k.height, k.width), INVALID_LABEL, dtype=np.uint16)
        with np.errstate(divide="ignore", invalid="ignore"):
            for lo, hi, lbl in zip(boxes_lo, boxes_hi, box_labels):
                t0 = (lo - origin) / dirs_w
                t1 = (hi - origin) / dirs_w
                # Axes with zero direction: the slab never constrains the ray
                # if the origin lies inside it, and can never be hit otherwise.
                par = dirs_w == 0.0
                if par.any():
                    inside_slab = (origin >= lo) & (origin < hi)
                    t0 = np.where(par, np.where(inside_slab, -np.inf, np.inf), t0)
                    t1 = np.where(par, np.where(inside_slab, np.inf, np.inf), t1)
                t_enter = np.minimum(t0, t1).max(axis=-1)
                t_exit = np.maximum(t0, t1).min(axis=-1)
                hit = (t_enter <= t_exit) & (t_enter > near) & (t_enter < best_t)
                best_t[hit] = t_enter[hit]
                best_label[hit] = lbl
        no_hit = ~np.isfinite(best_t)
        depth = np.where(no_hit, 0.0, best_t * (1.0 + depth_bias_rel)).astype(np.float32)
        frames.append(SensedFrame(depth, best_label, k, pose, label_names))
    return frames


def scene_occupancy(
    scene: SceneDescription,
    voxel_size: float = DEFAULT_VOXEL_SIZE_M,
    table: MaterialTable | None = None,
    mode: str = "surface",
) -> VoxelGrid:
    """Reference rasterization of the scene's boxes onto its own grid.

    ``mode="solid"`` occupies every voxel whose center falls inside any
    element box (later elements override earlier ones where boxes overlap).
    ``mode="surface"`` (default) keeps only solid voxels with a free
    face-neighbor inside the grid: the voxels of the box-union surface as an
    interior scan can observe it, and the interface set a surface-mesh ray
    tracer would interact with.  One-voxel-thick structure is identical in
    both modes.
    """
    if mode not in ("surface", "solid"):
        raise DomainError(f"mode must be 'surface' or 'solid', got {mode!r}")
    table = table or default_table()
    origin = np.array(scene.bounds.lo, dtype=np.float64)
    size = np.array(scene.bounds.hi) - origin
    dims = np.maximum(np.round(size / voxel_size).astype(int), 1)
    occupancy = np.zeros(tuple(dims), dtype=bool)
    material = np.full(tuple(dims), FREE_MATERIAL, dtype=np.int16)
    for e in scene.elements:
        mat = table.material_id(e.label)
        i0 = [int(round((e.box.lo[a] - origin[a]) / voxel_size)) for a in range(3)]
        i1 = [int(round((e.box.hi[a] - origin[a]) / voxel_size)) for a in range(3)]
        sl = tuple(slice(max(a0, 0), min(a1, n)) for a0, a1, n in zip(i0, i1, dims))
        occupancy[sl] = True
        material[sl] = mat
    if mode == "surface":
        exposed = occupancy & ndimage.binary_dilation(~occupancy)
        material[~exposed] = FREE_MATERIAL
        occupancy = exposed
    return VoxelGrid(origin, voxel_size, occupancy, material, list(table.names))
