import json

import h5py
import numpy as np
import pytest

VOXEL = 0.1
FREQ = 3.5e9


def synth_sample(rng, nx=24, ny=20, nz=12, levels=3):
    """One synthetic sample obeying the dataset file contract: a smooth,
    learnable environment-loss field on top of an exact free-space baseline."""
    origin = np.zeros(3)
    tx = np.array([
        (rng.integers(2, nx - 2) + 0.5) * VOXEL,
        (rng.integers(2, ny - 2) + 0.5) * VOXEL,
        (rng.integers(1, nz - 1) + 0.5) * VOXEL,
    ])
    cx = (np.arange(nx) + 0.5) * VOXEL
    cy = (np.arange(ny) + 0.5) * VOXEL
    cz = (np.arange(nz) + 0.5) * VOXEL
    d3 = np.sqrt(
        (cx[:, None, None] - tx[0]) ** 2
        + (cy[None, :, None] - tx[1]) ** 2
        + (cz[None, None, :] - tx[2]) ** 2
    )
    d3 = np.maximum(d3, VOXEL / 2)

    occupancy = np.zeros((nx, ny, nz), dtype=np.uint8)
    wall_x = int(rng.integers(nx // 3, 2 * nx // 3))
    occupancy[wall_x, :, :] = 1
    reflection = np.where(occupancy, -8.1, -100.0).astype(np.float32)
    transmission = np.where(occupancy, -4.3, 0.0).astype(np.float32)

    heights = (np.arange(levels) + 0.5) * VOXEL
    layers = np.arange(levels)
    d2 = np.maximum(
        np.sqrt(
            (cx[:, None, None] - tx[0]) ** 2
            + (cy[None, :, None] - tx[1]) ** 2
            + (cz[layers][None, None, :] - tx[2]) ** 2
        ),
        VOXEL / 2,
    ).transpose(2, 0, 1)
    fspl = (20 * np.log10(d2) + 20 * np.log10(FREQ) - 147.55).astype(np.float32)
    # environment loss: a shadow behind the wall plus a gentle gradient
    shadow = np.zeros_like(fspl)
    behind = cx[None, :, None] > cx[wall_x]
    shadow += np.where(np.broadcast_to(behind, fspl.shape), 4.3, 0.0)
    shadow += (cy[None, None, :] * 2.0).astype(np.float32)
    pathloss = fspl + shadow
    valid = (rng.random(fspl.shape) > 0.05).astype(np.uint8)
    return {
        "occupancy": occupancy,
        "reflection_db": reflection,
        "transmission_db": transmission,
        "distance_m": d3.astype(np.float32),
        "tx_position_m": tx.astype(np.float32),
        "fspl_db": fspl,
        "pathloss_db": pathloss.astype(np.float32),
        "valid_mask": valid,
        "attrs": {
            "voxel_size_m": VOXEL,
            "frequency_hz": FREQ,
            "origin_m": origin,
            "heights_m": heights,
            "rotation_k": 0,
            "format_version": 1,
        },
    }


def write_dataset(path, samples_by_id):
    with h5py.File(path, "w") as f:
        for sid, payload in samples_by_id.items():
            g = f.require_group(f"samples/{sid}")
            for name, arr in payload.items():
                if name == "attrs":
                    continue
                g.create_dataset(name, data=arr, track_times=False)
            g.attrs["scene_id"] = sid.split("_")[0]
            for k, v in payload["attrs"].items():
                g.attrs[k] = v


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def dataset(tmp_path, rng):
    """Five-sample dataset across two scenes, plus a matching manifest."""
    samples = {}
    for i in range(5):
        scene = "sceneA" if i < 3 else "sceneB"
        samples[f"{scene}_tx{i:02d}"] = synth_sample(rng)
    path = tmp_path / "d.h5"
    write_dataset(path, samples)
    ids = sorted(samples)
    manifest = {
        "train": [{"scene_id": i.split("_")[0], "sample_id": i} for i in ids[:3]],
        "val": [{"scene_id": i.split("_")[0], "sample_id": i} for i in ids[3:4]],
        "test": [{"scene_id": i.split("_")[0], "sample_id": i} for i in ids[4:]],
    }
    mpath = tmp_path / "manifest.json"
    mpath.write_text(json.dumps(manifest))
    return path, mpath, ids
