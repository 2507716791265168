"""Deterministic propagation oracle: direct path plus first-order reflections.

Per receiver cell the oracle combines the direct ray (free-space loss plus
one transmission loss per contiguous occupied run it crosses, split at
material changes) with image-method single-bounce paths off axis-aligned
occupied surfaces.  Path gains add non-coherently in linear power; the result
is a per-height stack of path-loss grids with a validity mask.

Traversal uses incremental axis-stepping over the half-open voxel boxes (a
ray grazing exactly along a face stays in the higher-index voxel).  The hot
loops are numba-compiled; results are independent of threading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage

from .errors import DomainError
from .materials import DB_FLOOR, MaterialTable, default_table, feature_arrays
from .voxelizer import FSPL_CONST_DB, VoxelGrid

DEFAULT_HEIGHTS_M = tuple(round(0.6 + 0.1 * i, 1) for i in range(11))

# Offset applied to reflection-leg endpoints so the legs terminate just off
# the reflecting face (free side) instead of exactly on the voxel boundary.
_SURFACE_EPS_M = 1e-6


@dataclass
class SimConfig:
    frequency_hz: float = 3.5e9
    heights_m: tuple[float, ...] = DEFAULT_HEIGHTS_M
    enable_reflections: bool = True
    min_power_floor_db: float = 160.0
    max_first_order_surfaces: int = 16
    min_surface_faces: int = 8

    def __post_init__(self) -> None:
        if self.frequency_hz <= 0:
            raise DomainError(f"frequency must be positive, got {self.frequency_hz}")
        hs = tuple(float(h) for h in self.heights_m)
        if not hs:
            raise DomainError("at least one receiver height is required")
        if any(b <= a for a, b in zip(hs, hs[1:])):
            raise DomainError("heights must be strictly increasing")
        self.heights_m = hs
        if self.min_power_floor_db <= 0:
            raise DomainError("power floor must be positive dB")


@dataclass
class PropagationCoefficients:
    """Per-material-id |reflection| and |transmission| losses in dB (>= 0)."""

    frequency_hz: float
    rho_abs_db: np.ndarray
    tau_abs_db: np.ndarray


def propagation_coefficients(
    table: MaterialTable, f_hz: float, db_floor: float = DB_FLOOR
) -> PropagationCoefficients:
    rho, tau = feature_arrays(table, f_hz, db_floor)
    return PropagationCoefficients(f_hz, -rho, -tau)


@dataclass
class PathLossStack:
    """Per-height path-loss grids (dB) with validity and the aligned baseline."""

    heights_m: np.ndarray       # (L,)
    layer_indices: np.ndarray   # (L,) voxel layers the heights map to
    loss_db: np.ndarray         # (L, Nx, Ny); NaN where invalid
    valid: np.ndarray           # (L, Nx, Ny) bool
    fspl_db: np.ndarray         # (L, Nx, Ny)
    frequency_hz: float
    origin: np.ndarray
    voxel_size: float

    def __post_init__(self) -> None:
        self.heights_m = np.asarray(self.heights_m, dtype=np.float64).reshape(-1)
        self.layer_indices = np.asarray(self.layer_indices, dtype=np.int64).reshape(-1)
        self.loss_db = np.asarray(self.loss_db, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        self.fspl_db = np.asarray(self.fspl_db, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if not (self.loss_db.shape == self.valid.shape == self.fspl_db.shape):
            raise DomainError("stack payload shapes differ")
        if self.loss_db.shape[0] != len(self.heights_m):
            raise DomainError("stack level count does not match heights")


@dataclass(frozen=True)
class ReflectionPath:
    axis: int                   # 0, 1, 2 = x, y, z plane normal
    plane_world: float          # world coordinate of the reflecting plane
    specular_point: tuple[float, float, float]
    unrolled_length_m: float
    rho_loss_db: float
    leg_env_db: float
    total_db: float


def height_to_layer(grid: VoxelGrid, z: float) -> int:
    """Nearest voxel-center layer for a world height; ties go to the lower layer."""
    lo, hi = grid.origin[2], grid.origin[2] + grid.dims[2] * grid.voxel_size
    if not (lo <= z <= hi):
        raise DomainError(f"height {z} m outside grid z-range [{lo}, {hi}]")
    t = (z - lo) / grid.voxel_size - 0.5
    k = int(math.floor(t + 0.5 - 1e-9))
    return min(max(k, 0), grid.dims[2] - 1)


@njit(cache=True, nogil=True)
def _traverse(ox, oy, oz, h, nx, ny, nz, ax, ay, az, bx, by, bz, out_idx):
    """Half-open DDA from a to b; writes visited (ix,iy,iz) rows, returns count."""
    ix = int(math.floor((ax - ox) / h))
    iy = int(math.floor((ay - oy) / h))
    iz = int(math.floor((az - oz) / h))
    ix = min(max(ix, 0), nx - 1)
    iy = min(max(iy, 0), ny - 1)
    iz = min(max(iz, 0), nz - 1)

    dx = bx - ax
    dy = by - ay
    dz = bz - az
    step_x = 1 if dx > 0.0 else (-1 if dx < 0.0 else 0)
    step_y = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
    step_z = 1 if dz > 0.0 else (-1 if dz < 0.0 else 0)

    inf = np.inf
    if step_x > 0:
        tmax_x = (ox + (ix + 1) * h - ax) / dx
        tdel_x = h / dx
    elif step_x < 0:
        tmax_x = (ox + ix * h - ax) / dx
        tdel_x = -h / dx
    else:
        tmax_x = inf
        tdel_x = inf
    if step_y > 0:
        tmax_y = (oy + (iy + 1) * h - ay) / dy
        tdel_y = h / dy
    elif step_y < 0:
        tmax_y = (oy + iy * h - ay) / dy
        tdel_y = -h / dy
    else:
        tmax_y = inf
        tdel_y = inf
    if step_z > 0:
        tmax_z = (oz + (iz + 1) * h - az) / dz
        tdel_z = h / dz
    elif step_z < 0:
        tmax_z = (oz + iz * h - az) / dz
        tdel_z = -h / dz
    else:
        tmax_z = inf
        tdel_z = inf

    out_idx[0, 0] = ix
    out_idx[0, 1] = iy
    out_idx[0, 2] = iz
    n = 1
    while True:
        m = tmax_x
        if tmax_y < m:
            m = tmax_y
        if tmax_z < m:
            m = tmax_z
        if m >= 1.0:
            break
        # Step every axis whose boundary crossing ties at m (exact corner
        # crossings move diagonally; the side cells have zero chord).
        if tmax_x == m:
            ix += step_x
            tmax_x += tdel_x
        if tmax_y == m:
            iy += step_y
            tmax_y += tdel_y
        if tmax_z == m:
            iz += step_z
            tmax_z += tdel_z
        if ix < 0 or ix >= nx or iy < 0 or iy >= ny or iz < 0 or iz >= nz:
            break
        out_idx[n, 0] = ix
        out_idx[n, 1] = iy
        out_idx[n, 2] = iz
        n += 1
    return n


@njit(cache=True, nogil=True)
def _env_loss_on_segment(occ, mat, tau_abs, ox, oy, oz, h, ax, ay, az, bx, by, bz, work):
    """Sum of |transmission| losses over contiguous occupied runs on a->b.

    One loss per run; runs split where the material changes (slab convention,
    so the loss does not scale with voxel size).
    """
    nx, ny, nz = occ.shape
    n = _traverse(ox, oy, oz, h, nx, ny, nz, ax, ay, az, bx, by, bz, work)
    loss = 0.0
    prev = -1
    for i in range(n):
        ix, iy, iz = work[i, 0], work[i, 1], work[i, 2]
        if occ[ix, iy, iz]:
            m = mat[ix, iy, iz]
            if m != prev:
                loss += tau_abs[m]
                prev = m
        else:
            prev = -1
    return loss


@njit(cache=True, nogil=True)
def _simulate_kernel(occ, mat, tau_abs, rho_abs, ox, oy, oz, h,
                     txx, txy, txz, layer_ks, f_term_db, floor_db,
                     plane_axis, plane_k, plane_sign, face_mat,
                     enable_refl, out_loss, out_valid):
    nx, ny, nz = occ.shape
    n_planes = plane_axis.shape[0]
    work = np.empty((nx + ny + nz + 4, 3), dtype=np.int64)
    half = 0.5 * h
    for li in range(layer_ks.shape[0]):
        rz = oz + (layer_ks[li] + 0.5) * h
        for ix in range(nx):
            rxx = ox + (ix + 0.5) * h
            for iy in range(ny):
                rxy = oy + (iy + 0.5) * h
                ddx = rxx - txx
                ddy = rxy - txy
                ddz = rz - txz
                dist = math.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
                dcl = dist if dist > half else half
                fs = 20.0 * math.log10(dcl) + f_term_db
                env = _env_loss_on_segment(
                    occ, mat, tau_abs, ox, oy, oz, h,
                    txx, txy, txz, rxx, rxy, rz, work,
                )
                l_direct = fs + env

                if not enable_refl:
                    if l_direct <= floor_db:
                        out_loss[li, ix, iy] = l_direct
                        out_valid[li, ix, iy] = True
                    else:
                        out_loss[li, ix, iy] = np.nan
                        out_valid[li, ix, iy] = False
                    continue

                power = 0.0
                n_paths = 0
                if l_direct <= floor_db:
                    power += 10.0 ** (-0.1 * l_direct)
                    n_paths += 1
                for p in range(n_planes):
                    axis = plane_axis[p]
                    sg = plane_sign[p]
                    if axis == 0:
                        w = ox + plane_k[p] * h
                        ta = txx
                        ra = rxx
                    elif axis == 1:
                        w = oy + plane_k[p] * h
                        ta = txy
                        ra = rxy
                    else:
                        w = oz + plane_k[p] * h
                        ta = txz
                        ra = rz
                    if sg * (ta - w) <= 0.0 or sg * (ra - w) <= 0.0:
                        continue
                    img_a = 2.0 * w - ta
                    denom = ra - img_a
                    s = (w - img_a) / denom
                    # Specular point on the plane; check it lands on a face.
                    if axis == 0:
                        c1 = txy + s * (rxy - txy)
                        c2 = txz + s * (rz - txz)
                        i1 = int(math.floor((c1 - oy) / h))
                        i2 = int(math.floor((c2 - oz) / h))
                        n1, n2 = ny, nz
                    elif axis == 1:
                        c1 = txx + s * (rxx - txx)
                        c2 = txz + s * (rz - txz)
                        i1 = int(math.floor((c1 - ox) / h))
                        i2 = int(math.floor((c2 - oz) / h))
                        n1, n2 = nx, nz
                    else:
                        c1 = txx + s * (rxx - txx)
                        c2 = txy + s * (rxy - txy)
                        i1 = int(math.floor((c1 - ox) / h))
                        i2 = int(math.floor((c2 - oy) / h))
                        n1, n2 = nx, ny
                    if i1 < 0 or i1 >= n1 or i2 < 0 or i2 >= n2:
                        continue
                    mface = face_mat[p, i1, i2]
                    if mface < 0:
                        continue
                    if axis == 0:
                        ux = rxx - img_a
                        uy = rxy - txy
                        uz = rz - txz
                        px_ = w + sg * _SURFACE_EPS_M
                        py_ = c1
                        pz_ = c2
                    elif axis == 1:
                        ux = rxx - txx
                        uy = rxy - img_a
                        uz = rz - txz
                        px_ = c1
                        py_ = w + sg * _SURFACE_EPS_M
                        pz_ = c2
                    else:
                        ux = rxx - txx
                        uy = rxy - txy
                        uz = rz - img_a
                        px_ = c1
                        py_ = c2
                        pz_ = w + sg * _SURFACE_EPS_M
                    ulen = math.sqrt(ux * ux + uy * uy + uz * uz)
                    ucl = ulen if ulen > half else half
                    env_r = _env_loss_on_segment(
                        occ, mat, tau_abs, ox, oy, oz, h,
                        txx, txy, txz, px_, py_, pz_, work,
                    ) + _env_loss_on_segment(
                        occ, mat, tau_abs, ox, oy, oz, h,
                        px_, py_, pz_, rxx, rxy, rz, work,
                    )
                    l_r = 20.0 * math.log10(ucl) + f_term_db + rho_abs[mface] + env_r
                    if l_r <= floor_db:
                        power += 10.0 ** (-0.1 * l_r)
                        n_paths += 1
                if n_paths == 0:
                    out_loss[li, ix, iy] = np.nan
                    out_valid[li, ix, iy] = False
                else:
                    out_loss[li, ix, iy] = -10.0 * math.log10(power)
                    out_valid[li, ix, iy] = True


def traverse_cells(grid: VoxelGrid, p0, p1) -> np.ndarray:
    """Voxel indices the segment p0->p1 crosses, in visit order."""
    p0 = np.asarray(p0, dtype=np.float64).reshape(3)
    p1 = np.asarray(p1, dtype=np.float64).reshape(3)
    if not (bool(grid.contains(p0)[0]) and bool(grid.contains(p1)[0])):
        raise DomainError("both segment endpoints must lie inside the grid")
    nx, ny, nz = grid.dims
    work = np.empty((nx + ny + nz + 4, 3), dtype=np.int64)
    n = _traverse(
        grid.origin[0], grid.origin[1], grid.origin[2], grid.voxel_size,
        nx, ny, nz, p0[0], p0[1], p0[2], p1[0], p1[1], p1[2], work,
    )
    return work[:n].copy()


def trace_direct(grid: VoxelGrid, tx, rx, coeffs: PropagationCoefficients) -> float:
    """Direct-path loss in dB: free-space term plus per-run transmission losses.

    Arithmetic mirrors the volume kernel exactly, so a reflections-disabled
    volume equals per-cell trace_direct bit for bit.
    """
    tx = np.asarray(tx, dtype=np.float64).reshape(3)
    rx = np.asarray(rx, dtype=np.float64).reshape(3)
    if not (bool(grid.contains(tx)[0]) and bool(grid.contains(rx)[0])):
        raise DomainError("tx and rx must lie inside the grid")
    h = grid.voxel_size
    f_term = 20.0 * math.log10(coeffs.frequency_hz) + FSPL_CONST_DB
    ddx, ddy, ddz = rx[0] - tx[0], rx[1] - tx[1], rx[2] - tx[2]
    d = math.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
    dcl = d if d > h / 2.0 else h / 2.0
    fs = 20.0 * math.log10(dcl) + f_term
    if d == 0.0:
        return fs
    nx, ny, nz = grid.dims
    work = np.empty((nx + ny + nz + 4, 3), dtype=np.int64)
    env = _env_loss_on_segment(
        grid.occupancy, grid.material, coeffs.tau_abs_db,
        grid.origin[0], grid.origin[1], grid.origin[2], h,
        tx[0], tx[1], tx[2], rx[0], rx[1], rx[2], work,
    )
    return fs + float(env)


def _extract_surfaces(grid: VoxelGrid, cfg: SimConfig):
    """Axis-aligned reflector planes: (axis, k, free-side sign, face materials)."""
    occ, mat = grid.occupancy, grid.material
    candidates = []
    for axis in range(3):
        occ_m = np.moveaxis(occ, axis, 0)
        mat_m = np.moveaxis(mat, axis, 0)
        for k in range(1, occ_m.shape[0]):
            lower, upper = occ_m[k - 1], occ_m[k]
            faces_up = lower & ~upper      # free side is the +axis side
            if faces_up.any():
                candidates.append(
                    (axis, k, 1, np.where(faces_up, mat_m[k - 1], -1).astype(np.int16))
                )
            faces_dn = upper & ~lower      # free side is the -axis side
            if faces_dn.any():
                candidates.append(
                    (axis, k, -1, np.where(faces_dn, mat_m[k], -1).astype(np.int16))
                )
    candidates = [c for c in candidates if int((c[3] >= 0).sum()) >= cfg.min_surface_faces]
    candidates.sort(key=lambda c: (-int((c[3] >= 0).sum()), c[0], c[1], c[2]))
    return candidates[: cfg.max_first_order_surfaces]


def _pack_surfaces(grid: VoxelGrid, surfaces):
    maxd = max(grid.dims)
    n = len(surfaces)
    plane_axis = np.zeros(n, dtype=np.int64)
    plane_k = np.zeros(n, dtype=np.int64)
    plane_sign = np.zeros(n, dtype=np.int64)
    face_mat = np.full((max(n, 1), maxd, maxd), -1, dtype=np.int16)
    for i, (axis, k, sign, fmat) in enumerate(surfaces):
        plane_axis[i] = axis
        plane_k[i] = k
        plane_sign[i] = sign
        face_mat[i, : fmat.shape[0], : fmat.shape[1]] = fmat
    return plane_axis, plane_k, plane_sign, face_mat


def enumerate_reflections(
    grid: VoxelGrid,
    tx,
    rx,
    coeffs: PropagationCoefficients,
    cfg: SimConfig | None = None,
) -> list[ReflectionPath]:
    """Image-method single-bounce paths from tx to rx off extracted surfaces.

    Pure-python mirror of the volume kernel's reflection arm, kept readable
    for inspection and cross-checked against the kernel in the test suite.
    """
    cfg = cfg or SimConfig(frequency_hz=coeffs.frequency_hz)
    if not cfg.enable_reflections:
        return []
    tx = np.asarray(tx, dtype=np.float64).reshape(3)
    rx = np.asarray(rx, dtype=np.float64).reshape(3)
    h = grid.voxel_size
    f_term = 20.0 * math.log10(coeffs.frequency_hz) + FSPL_CONST_DB
    nx, ny, nz = grid.dims
    work = np.empty((nx + ny + nz + 4, 3), dtype=np.int64)
    paths: list[ReflectionPath] = []
    for axis, k, sign, fmat in _extract_surfaces(grid, cfg):
        w = grid.origin[axis] + k * h
        if sign * (tx[axis] - w) <= 0.0 or sign * (rx[axis] - w) <= 0.0:
            continue
        image = tx.copy()
        image[axis] = 2.0 * w - tx[axis]
        denom = rx[axis] - image[axis]
        s = (w - image[axis]) / denom
        spec = image + s * (rx - image)
        cross = [a for a in range(3) if a != axis]
        i1 = int(math.floor((spec[cross[0]] - grid.origin[cross[0]]) / h))
        i2 = int(math.floor((spec[cross[1]] - grid.origin[cross[1]]) / h))
        if not (0 <= i1 < fmat.shape[0] and 0 <= i2 < fmat.shape[1]):
            continue
        mface = int(fmat[i1, i2])
        if mface < 0:
            continue
        unrolled = float(np.linalg.norm(rx - image))
        leg_point = spec.copy()
        leg_point[axis] = w + sign * _SURFACE_EPS_M
        env = float(
            _env_loss_on_segment(
                grid.occupancy, grid.material, coeffs.tau_abs_db,
                grid.origin[0], grid.origin[1], grid.origin[2], h,
                tx[0], tx[1], tx[2], leg_point[0], leg_point[1], leg_point[2], work,
            )
            + _env_loss_on_segment(
                grid.occupancy, grid.material, coeffs.tau_abs_db,
                grid.origin[0], grid.origin[1], grid.origin[2], h,
                leg_point[0], leg_point[1], leg_point[2], rx[0], rx[1], rx[2], work,
            )
        )
        rho_loss = float(coeffs.rho_abs_db[mface])
        total = 20.0 * math.log10(max(unrolled, h / 2.0)) + f_term + rho_loss + env
        paths.append(
            ReflectionPath(
                axis=axis,
                plane_world=float(w),
                specular_point=tuple(float(v) for v in spec),
                unrolled_length_m=unrolled,
                rho_loss_db=rho_loss,
                leg_env_db=env,
                total_db=total,
            )
        )
    return paths


def simulate_volume(
    grid: VoxelGrid,
    tx,
    cfg: SimConfig | None = None,
    table: MaterialTable | None = None,
) -> PathLossStack:
    """Path-loss heatmap stack for one transmitter over the configured heights."""
    cfg = cfg or SimConfig()
    table = table or default_table()
    tx = np.asarray(tx, dtype=np.float64).reshape(3)
    if not bool(grid.contains(tx)[0]):
        raise DomainError(f"tx {tx.tolist()} outside grid bounds")
    tx_idx = tuple(grid.world_to_index(tx)[0])
    if grid.occupancy[tx_idx]:
        raise DomainError(f"tx {tx.tolist()} lies in an occupied voxel")

    layers = np.array([height_to_layer(grid, z) for z in cfg.heights_m], dtype=np.int64)
    coeffs = propagation_coefficients(table, cfg.frequency_hz)
    surfaces = _extract_surfaces(grid, cfg) if cfg.enable_reflections else []
    plane_axis, plane_k, plane_sign, face_mat = _pack_surfaces(grid, surfaces)

    nx, ny, _ = grid.dims
    n_levels = len(layers)
    out_loss = np.empty((n_levels, nx, ny), dtype=np.float64)
    out_valid = np.empty((n_levels, nx, ny), dtype=bool)
    f_term = 20.0 * math.log10(cfg.frequency_hz) + FSPL_CONST_DB
    _simulate_kernel(
        grid.occupancy, grid.material, coeffs.tau_abs_db, coeffs.rho_abs_db,
        grid.origin[0], grid.origin[1], grid.origin[2], grid.voxel_size,
        tx[0], tx[1], tx[2], layers, f_term, cfg.min_power_floor_db,
        plane_axis, plane_k, plane_sign, face_mat,
        cfg.enable_reflections, out_loss, out_valid,
    )

    # Aligned free-space baseline at the same layers and distance clamp.
    cx = grid.axis_centers(0)[:, None]
    cy = grid.axis_centers(1)[None, :]
    fspl = np.empty_like(out_loss)
    half = grid.voxel_size / 2.0
    for li, kz in enumerate(layers):
        z = grid.origin[2] + (kz + 0.5) * grid.voxel_size
        d = np.sqrt((cx - tx[0]) ** 2 + (cy - tx[1]) ** 2 + (z - tx[2]) ** 2)
        fspl[li] = 20.0 * np.log10(np.maximum(d, half)) + f_term

    return PathLossStack(
        heights_m=np.array(cfg.heights_m, dtype=np.float64),
        layer_indices=layers,
        loss_db=out_loss,
        valid=out_valid,
        fspl_db=fspl,
        frequency_hz=cfg.frequency_hz,
        origin=grid.origin,
        voxel_size=grid.voxel_size,
    )


def slice_heights(stack: PathLossStack, heights_m) -> PathLossStack:
    """Sub-stack for the requested heights (nearest computed layer per height)."""
    heights = [float(z) for z in np.atleast_1d(heights_m)]
    lo = stack.origin[2]
    picks = []
    for z in heights:
        t = (z - lo) / stack.voxel_size - 0.5
        k = int(math.floor(t + 0.5 - 1e-9))
        if z < lo or k < 0:
            raise DomainError(f"height {z} m below the stack's grid")
        matches = np.nonzero(stack.layer_indices == k)[0]
        if matches.size == 0:
            raise DomainError(f"height {z} m maps to layer {k}, not in this stack")
        picks.append(int(matches[0]))
    idx = np.array(picks, dtype=np.int64)
    return PathLossStack(
        heights_m=np.array(heights, dtype=np.float64),
        layer_indices=stack.layer_indices[idx],
        loss_db=stack.loss_db[idx].copy(),
        valid=stack.valid[idx].copy(),
        fspl_db=stack.fspl_db[idx].copy(),
        frequency_hz=stack.frequency_hz,
        origin=stack.origin,
        voxel_size=stack.voxel_size,
    )


def fill_gaps(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Complete a 2D grid: invalid cells with >= 2 valid axis neighbors take
    their average, the rest copy the nearest valid cell (Euclidean distance
    in cell units, ties toward the lower flat index).  Valid cells are never
    modified and a second application is the identity."""
    vals = np.asarray(values, dtype=np.float64)
    v = np.asarray(valid, dtype=bool)
    if vals.shape != v.shape or vals.ndim != 2:
        raise DomainError("values and valid mask must be matching 2D arrays")
    if not v.any():
        raise DomainError("cannot fill a slice with no valid cells")
    out = vals.copy()
    if v.all():
        return out

    nx, ny = vals.shape
    acc = np.zeros_like(vals)
    cnt = np.zeros(vals.shape, dtype=np.int64)
    for shift, axis in ((1, 0), (-1, 0), (1, 1), (-1, 1)):
        nb_val = np.roll(np.where(v, vals, 0.0), shift, axis=axis)
        nb_ok = np.roll(v, shift, axis=axis)
        # roll wraps around; mask out the wrapped edge
        edge = [slice(None)] * 2
        edge[axis] = 0 if shift == 1 else -1
        nb_ok = nb_ok.copy()
        nb_ok[tuple(edge)] = False
        acc += np.where(nb_ok, nb_val, 0.0)
        cnt += nb_ok
    stage1 = (~v) & (cnt >= 2)
    out[stage1] = acc[stage1] / cnt[stage1]
    v2 = v | stage1
    if v2.all():
        return out

    # Nearest-valid fill with deterministic tie-breaking by flat (C-order) index.
    dist = ndimage.distance_transform_edt(~v2)
    remaining = np.argwhere(~v2)
    d2_needed = np.round(dist[~v2] ** 2).astype(np.int64)
    r_max = int(math.ceil(math.sqrt(d2_needed.max())))
    offsets_by_d2: dict[int, list[tuple[int, int]]] = {}
    for ddx in range(-r_max, r_max + 1):
        for ddy in range(-r_max, r_max + 1):
            d2 = ddx * ddx + ddy * ddy
            if 0 < d2 <= r_max * r_max:
                offsets_by_d2.setdefault(d2, []).append((ddx, ddy))
    for lst in offsets_by_d2.values():
        lst.sort(key=lambda o: o[0] * ny + o[1])
    for (ix, iy), d2 in zip(remaining, d2_needed):
        for ddx, ddy in offsets_by_d2[int(d2)]:
            jx, jy = ix + ddx, iy + ddy
            if 0 <= jx < nx and 0 <= jy < ny and v2[jx, jy]:
                out[ix, iy] = out[jx, jy]
                break
        else:  # pragma: no cover - edt guarantees a hit at this distance
            raise DomainError("nearest-neighbor fill found no source cell")
    return out


def fill_stack(stack: PathLossStack) -> PathLossStack:
    """Apply :func:`fill_gaps` per level; the validity record is preserved."""
    filled = np.empty_like(stack.loss_db)
    for li in range(stack.loss_db.shape[0]):
        filled[li] = fill_gaps(stack.loss_db[li], stack.valid[li])
    return PathLossStack(
        heights_m=stack.heights_m.copy(),
        layer_indices=stack.layer_indices.copy(),
        loss_db=filled,
        valid=stack.valid.copy(),
        fspl_db=stack.fspl_db.copy(),
        frequency_hz=stack.frequency_hz,
        origin=stack.origin,
        voxel_size=stack.voxel_size,
    )
