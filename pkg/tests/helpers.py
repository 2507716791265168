"""Shared test helpers: independent oracles kept free of the library's own
computation paths."""

import math

import numpy as np

ETA0 = 376.730
EPS0 = 8.854e-12
MU0 = 4e-7 * math.pi


def oracle_fresnel_db(a, b, c, d, f_hz):
    """Reflection/transmission dB via polar-form arithmetic only.

    Deliberately avoids complex numbers and numpy so it shares no code path
    with the implementation under test.
    """
    f_ghz = f_hz / 1e9
    eps_r = a * f_ghz**b
    sigma = c * f_ghz**d
    w = 2.0 * math.pi * f_hz
    num_mag = math.hypot(0.0, w * MU0)
    num_ang = math.atan2(w * MU0, 0.0)
    den_mag = math.hypot(sigma, w * eps_r * EPS0)
    den_ang = math.atan2(w * eps_r * EPS0, sigma)
    eta_mag = math.sqrt(num_mag / den_mag)
    eta_ang = (num_ang - den_ang) / 2.0
    eta_re = eta_mag * math.cos(eta_ang)
    eta_im = eta_mag * math.sin(eta_ang)
    gamma_mag = math.hypot(eta_re - ETA0, eta_im) / math.hypot(eta_re + ETA0, eta_im)
    t_mag = 2.0 * eta_mag / math.hypot(eta_re + ETA0, eta_im)
    rho_db = 20.0 * math.log10(gamma_mag) if gamma_mag > 0 else -math.inf
    tau_db = 20.0 * math.log10(t_mag)
    return rho_db, tau_db


def cells_bruteforce(grid, p0, p1, step_frac=0.01):
    """Cells a segment crosses, by brute-force point classification.

    Samples at `voxel_size * step_frac` spacing along the segment, plus the
    midpoints of the intervals between consecutive grid-plane crossings so
    arbitrarily short corner chords are found too.  Returns a set of tuples.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    o, h = grid.origin, grid.voxel_size
    d = p1 - p0
    seg = float(np.linalg.norm(d))
    n = max(int(seg / (h * step_frac)), 1) + 1
    ts = [np.linspace(0.0, 1.0, n)]
    crossings = [np.array([0.0, 1.0])]
    for axis in range(3):
        if d[axis] == 0.0:
            continue
        ks = np.arange(grid.dims[axis] + 1)
        tk = (o[axis] + ks * h - p0[axis]) / d[axis]
        crossings.append(tk[(tk > 0.0) & (tk < 1.0)])
    tc = np.unique(np.concatenate(crossings))
    mids = (tc[:-1] + tc[1:]) / 2.0
    mids = mids[np.diff(tc) > 0]
    all_t = np.concatenate([*ts, mids])
    pts = p0[None, :] + all_t[:, None] * d[None, :]
    idx = np.floor((pts - o) / h).astype(np.int64)
    ok = np.all((idx >= 0) & (idx < np.array(grid.dims)), axis=1)
    return {tuple(row) for row in idx[ok]}


def empty_grid(dims=(16, 16, 8), voxel_size=0.1, origin=(0.0, 0.0, 0.0), names=None):
    """Unoccupied grid for traversal and free-space tests."""
    from voxelray.voxelizer import FREE_MATERIAL, VoxelGrid

    if names is None:
        from voxelray.materials import default_table

        names = list(default_table().names)
    dims = tuple(dims)
    return VoxelGrid(
        origin=np.array(origin, dtype=np.float64),
        voxel_size=voxel_size,
        occupancy=np.zeros(dims, dtype=bool),
        material=np.full(dims, FREE_MATERIAL, dtype=np.int16),
        material_names=names,
    )


def put_box(grid, i0, i1, material_id):
    """Occupy the index box [i0, i1) with one material."""
    sl = tuple(slice(a, b) for a, b in zip(i0, i1))
    grid.occupancy[sl] = True
    grid.material[sl] = material_id
    return grid
