"""Command-line entry points tying the pipeline together.

Exit codes: 0 success, 2 usage, 3 input/format, 4 numeric/domain.
Every run echoes its resolved configuration so it can be reproduced.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import evaluation, scenegen, sensing, simulator, voxelizer
from .errors import DomainError, FormatError, VoxelrayError
from .materials import default_table, load_material_table

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_DOMAIN = 4


def _parse_triple(text: str) -> np.ndarray:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise DomainError(f"expected 'x,y,z', got {text!r}")
    return np.array(parts)


def _parse_range(text: str) -> tuple[float, float]:
    parts = [float(v) for v in text.split(":")]
    if len(parts) != 2 or parts[1] < parts[0]:
        raise DomainError(f"expected 'lo:hi', got {text!r}")
    return parts[0], parts[1]


def _parse_heights(text: str) -> tuple[float, ...]:
    """'start:stop:step', inclusive of stop within 1e-9."""
    parts = [float(v) for v in text.split(":")]
    if len(parts) == 1:
        return (parts[0],)
    if len(parts) != 3 or parts[2] <= 0:
        raise DomainError(f"expected 'start:stop:step', got {text!r}")
    start, stop, step = parts
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 9) for i in range(max(n, 1)))


def _parse_rotations(text: str) -> list[int]:
    if not text:
        return []
    ks = []
    for token in text.split(","):
        deg = float(token)
        if deg % 90 != 0 or not 0 < deg < 360:
            raise DomainError(f"rotations must be 90/180/270 degrees, got {token!r}")
        ks.append(int(deg) // 90)
    return sorted(set(ks))


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("VOXELRAY_THREADS")
    return max(1, int(env)) if env else 1


def _echo_config(args: argparse.Namespace) -> None:
    resolved = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func", "config") and v is not None
    }
    print(f"[voxelray] resolved config: {json.dumps(resolved, default=str)}")


def _load_table(args):
    if getattr(args, "materials", None):
        return load_material_table(args.materials)
    return default_table()


def _gen_params(args) -> scenegen.GenParams:
    kwargs = {}
    if getattr(args, "rooms", None):
        lo, hi = (int(v) for v in args.rooms.split(":"))
        kwargs["rooms"] = (lo, hi)
    if getattr(args, "room_size", None):
        kwargs["room_width_m"] = _parse_range(args.room_size)
    if getattr(args, "depth", None):
        kwargs["depth_m"] = _parse_range(args.depth)
    if getattr(args, "ceiling_height", None):
        kwargs["ceiling_height_m"] = args.ceiling_height
    if getattr(args, "furniture_density", None) is not None:
        kwargs["furniture_density"] = args.furniture_density
    return scenegen.GenParams(**kwargs)


# ---------------------------------------------------------------- subcommands

def cmd_scenegen(args) -> int:
    scene = scenegen.gen_scene(args.seed, _gen_params(args))
    scene.save(args.out)
    print(f"[voxelray] wrote scene with {len(scene.elements)} elements to {args.out}")
    return EXIT_OK


def cmd_scan(args) -> int:
    scene = scenegen.SceneDescription.load(args.scene)
    plan = scenegen.make_scan_plan(
        scene,
        views_per_room=args.views_per_room,
        ring_height_m=args.ring_height,
        intrinsics=scenegen.default_intrinsics(args.width, args.height, args.hfov_deg),
    )
    frames = scenegen.render_views(scene, plan)
    sensing.write_frames(args.out, frames)
    print(f"[voxelray] wrote {len(frames)} frames to {args.out}")
    return EXIT_OK


def cmd_voxelize(args) -> int:
    frames = sensing.read_frames(args.frames)
    cloud = sensing.fuse(frames, max_points=args.max_points)
    table = _load_table(args)
    h = args.voxel_size
    if args.scene:
        scene = scenegen.SceneDescription.load(args.scene)
        bounds = (np.array(scene.bounds.lo), np.array(scene.bounds.hi))
    elif args.bounds:
        vals = [float(v) for v in args.bounds.split(",")]
        if len(vals) != 6:
            raise DomainError("--bounds expects x0,y0,z0,x1,y1,z1")
        bounds = (np.array(vals[:3]), np.array(vals[3:]))
    else:
        lo = np.floor(cloud.points.min(axis=0) / h) * h
        hi = np.ceil(cloud.points.max(axis=0) / h) * h
        bounds = (lo, hi)
    grid = voxelizer.voxelize_cloud(cloud, h, bounds, table, min_points=args.min_points)
    ds.write_grid(grid, args.out)
    print(
        f"[voxelray] grid {grid.dims} with {int(grid.occupancy.sum())} occupied voxels "
        f"({grid.dropped_points} points dropped) -> {args.out}"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    grid = ds.read_grid(args.grid)
    table = _load_table(args)
    tx = _parse_triple(args.tx)
    cfg = simulator.SimConfig(
        frequency_hz=args.freq_ghz * 1e9,
        heights_m=_parse_heights(args.heights),
        enable_reflections=not args.no_reflections,
        min_power_floor_db=args.power_floor,
        max_first_order_surfaces=args.max_surfaces,
    )
    features = voxelizer.build_feature_tensor(grid, table, cfg.frequency_hz, tx)
    stack = simulator.simulate_volume(grid, tx, cfg, table)
    filled = simulator.fill_stack(stack)
    sample = ds.sample_from_pipeline(features, filled, scene_id=args.scene_id)
    Path(args.out).unlink(missing_ok=True)
    ds.write_sample(sample, args.out, sample_id=args.sample_id, compression=args.gzip)
    print(
        f"[voxelray] simulated {len(cfg.heights_m)} height slices "
        f"({int(stack.valid.sum())}/{stack.valid.size} cells valid) -> {args.out}"
    )
    return EXIT_OK


def _build_one_scene(scene_index: int, args, table):
    """Generate, scan, voxelize, and ground-truth one scene; returns samples."""
    master = np.random.SeedSequence([args.seed, scene_index])
    scene_seed = int(master.generate_state(1)[0])
    scene = scenegen.gen_scene(scene_seed, _gen_params(args))
    scene_id = f"scene{scene_index:03d}"

    plan = scenegen.make_scan_plan(scene, views_per_room=args.views_per_room)
    frames = scenegen.render_views(scene, plan)
    cloud = sensing.fuse(frames)
    bounds = (np.array(scene.bounds.lo), np.array(scene.bounds.hi))
    sensed = voxelizer.voxelize_cloud(cloud, args.voxel_size, bounds, table)
    # Ground truth runs on the scene's own geometry; inputs come from the scan.
    reference = scenegen.scene_occupancy(scene, args.voxel_size, table)

    cfg = simulator.SimConfig(
        frequency_hz=args.freq_ghz * 1e9,
        heights_m=_parse_heights(args.heights),
        enable_reflections=not args.no_reflections,
    )
    txs = ds.sample_tx(reference, args.tx_per_scene, seed=scene_seed + 1)

    def one_tx(j_tx):
        j, tx = j_tx
        features = voxelizer.build_feature_tensor(sensed, table, cfg.frequency_hz, tx)
        stack = simulator.simulate_volume(reference, tx, cfg, table)
        filled = simulator.fill_stack(stack)
        return j, ds.sample_from_pipeline(features, filled, scene_id=scene_id)

    n_threads = _threads(args)
    items = list(enumerate(txs))
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(one_tx, items))
    else:
        results = [one_tx(item) for item in items]

    out = []
    for j, base in results:
        out.append((f"{scene_id}_tx{j:03d}_r0", base))
        for k in _parse_rotations(args.rotations):
            out.append((f"{scene_id}_tx{j:03d}_r{k}", ds.rotate_sample(base, k)))
    return out


def cmd_dataset_build(args) -> int:
    table = _load_table(args)
    out_path = Path(args.out)
    out_path.unlink(missing_ok=True)
    total = 0
    import h5py

    with h5py.File(out_path, "w") as f:
        for i in range(args.scenes):
            for sample_id, sample in _build_one_scene(i, args, table):
                ds.write_sample(sample, f, sample_id=sample_id, compression=args.gzip)
                total += 1
            print(f"[voxelray] scene {i + 1}/{args.scenes} done")
    print(f"[voxelray] wrote {total} samples to {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    import h5py

    scene_samples: dict[str, list[str]] = {}
    with h5py.File(args.dataset, "r") as f:
        if "samples" not in f:
            raise FormatError(f"{args.dataset}: no /samples group")
        for sid in sorted(f["samples"]):
            scene = f["samples"][sid].attrs["scene_id"]
            if isinstance(scene, bytes):
                scene = scene.decode()
            scene_samples.setdefault(str(scene), []).append(sid)
    manifest = ds.split_scenes(
        scene_samples, seed=args.seed,
        test_scenes=args.test_scenes, val_fraction=args.val_fraction,
    )
    manifest.save(args.out)
    print(
        f"[voxelray] split {sum(len(v) for v in scene_samples.values())} samples: "
        f"{len(manifest.train)} train / {len(manifest.val)} val / {len(manifest.test)} test"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = ds.read_all_samples(args.pred)
    truth = ds.read_all_samples(args.truth)
    common = sorted(set(pred) & set(truth))
    if not common:
        raise FormatError("prediction and truth files share no sample ids")
    heights = truth[common[0]].heights_m
    sums = None
    for sid in common:
        p, t = pred[sid], truth[sid]
        if p.pathloss_db.shape != t.pathloss_db.shape:
            raise FormatError(f"sample {sid}: shape mismatch")
        if not np.allclose(t.heights_m, heights):
            raise FormatError(f"sample {sid}: height levels differ across samples")
        if args.masked and t.valid_mask is not None:
            mask = t.valid_mask.astype(bool)
        else:
            mask = np.ones(t.pathloss_db.shape, dtype=bool)
        err = p.pathloss_db.astype(np.float64) - t.pathloss_db.astype(np.float64)
        if sums is None:
            sums = {
                "abs": np.zeros(len(heights)), "sq": np.zeros(len(heights)),
                "n": np.zeros(len(heights), dtype=np.int64),
            }
        for li in range(len(heights)):
            e = err[li][mask[li]]
            sums["abs"][li] += np.abs(e).sum()
            sums["sq"][li] += (e**2).sum()
            sums["n"][li] += e.size
    if sums is None or sums["n"].sum() == 0:
        raise DomainError("no cells to evaluate")
    per_height = [
        (float(h), float(sums["abs"][li] / sums["n"][li]),
         float(np.sqrt(sums["sq"][li] / sums["n"][li])))
        for li, h in enumerate(heights) if sums["n"][li] > 0
    ]
    n_total = int(sums["n"].sum())
    report = evaluation.EvalReport(
        mae_db=float(sums["abs"].sum() / n_total),
        rmse_db=float(np.sqrt(sums["sq"].sum() / n_total)),
        n_cells=n_total,
        per_height=per_height,
    )
    Path(args.out).write_text(report.to_json())
    if args.csv:
        report.write_csv(args.csv)
    print(f"[voxelray] MAE {report.mae_db:.3f} dB, RMSE {report.rmse_db:.3f} dB "
          f"over {report.n_cells} cells ({len(common)} samples) -> {args.out}")
    return EXIT_OK


def cmd_render(args) -> int:
    from matplotlib import colormaps
    from PIL import Image
    from PIL.PngImagePlugin import PngInfo

    sample = ds.read_sample(args.sample, sample_id=args.id)
    level = int(np.argmin(np.abs(sample.heights_m - args.height)))
    if abs(sample.heights_m[level] - args.height) > sample.voxel_size_m:
        raise DomainError(
            f"height {args.height} m not in sample heights {sample.heights_m.tolist()}"
        )
    slc = sample.pathloss_db[level].astype(np.float64)   # (Nx, Ny)
    norm = np.clip((slc - args.vmin) / (args.vmax - args.vmin), 0.0, 1.0)
    rgba = colormaps[args.cmap](norm)                    # (Nx, Ny, 4)
    # Image rows run from high y to low y so the map reads like a floor plan.
    rgb = (rgba[:, ::-1, :3].transpose(1, 0, 2) * 255).astype(np.uint8)
    meta = PngInfo()
    meta.add_text("vmin_db", str(args.vmin))
    meta.add_text("vmax_db", str(args.vmax))
    meta.add_text("height_m", str(float(sample.heights_m[level])))
    meta.add_text("scene_id", sample.scene_id)
    Image.fromarray(rgb, "RGB").save(args.out, pnginfo=meta)
    print(f"[voxelray] rendered {slc.shape[0]}x{slc.shape[1]} slice "
          f"at {sample.heights_m[level]} m -> {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------- parsing

def _add_gen_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rooms", help="room count range LO:HI (default 1:3)")
    p.add_argument("--room-size", help="room width range in meters LO:HI")
    p.add_argument("--depth", help="room depth range in meters LO:HI")
    p.add_argument("--ceiling-height", type=float, help="ceiling height in meters")
    p.add_argument("--furniture-density", type=float, help="furniture pieces per m^2")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="voxelray", description=__doc__)
    parser.add_argument("--config", help="JSON file of flag defaults (flags override)")
    sub = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("scenegen", help="generate a procedural scene JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_gen_flags(p)
    p.set_defaults(func=cmd_scenegen)
    registry["scenegen"] = p

    p = sub.add_parser("scan", help="render depth/semantic frames for a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--views-per-room", type=int, default=12)
    p.add_argument("--ring-height", type=float, default=1.5)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--hfov-deg", type=float, default=90.0)
    p.set_defaults(func=cmd_scan)
    registry["scan"] = p

    p = sub.add_parser("voxelize", help="fuse a frame directory into a voxel grid")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--voxel-size", type=float, default=0.1)
    p.add_argument("--scene", help="scene JSON whose bounds define the grid")
    p.add_argument("--bounds", help="x0,y0,z0,x1,y1,z1 in meters")
    p.add_argument("--min-points", type=int, default=1)
    p.add_argument("--max-points", type=int, default=None)
    p.add_argument("--materials", help="material table JSON")
    p.set_defaults(func=cmd_voxelize)
    registry["voxelize"] = p

    p = sub.add_parser("simulate", help="path-loss sample for one Tx over a grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--tx", required=True, help="x,y,z in meters")
    p.add_argument("--out", required=True)
    p.add_argument("--freq-ghz", type=float, default=3.5)
    p.add_argument("--heights", default="0.6:1.6:0.1")
    p.add_argument("--no-reflections", action="store_true")
    p.add_argument("--power-floor", type=float, default=160.0)
    p.add_argument("--max-surfaces", type=int, default=16)
    p.add_argument("--scene-id", default="scene")
    p.add_argument("--sample-id", default="0")
    p.add_argument("--gzip", action="store_true")
    p.add_argument("--materials", help="material table JSON")
    p.set_defaults(func=cmd_simulate)
    registry["simulate"] = p

    p = sub.add_parser("dataset", help="dataset-level operations")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    b = dsub.add_parser("build", help="end-to-end dataset: scenes x tx x rotations")
    b.add_argument("--out", required=True)
    b.add_argument("--scenes", type=int, default=2)
    b.add_argument("--tx-per-scene", type=int, default=5)
    b.add_argument("--rotations", default="", help="comma list of 90/180/270")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--voxel-size", type=float, default=0.1)
    b.add_argument("--freq-ghz", type=float, default=3.5)
    b.add_argument("--heights", default="0.6:1.6:0.1")
    b.add_argument("--no-reflections", action="store_true")
    b.add_argument("--views-per-room", type=int, default=12)
    b.add_argument("--threads", type=int, default=None)
    b.add_argument("--gzip", action="store_true")
    b.add_argument("--materials", help="material table JSON")
    _add_gen_flags(b)
    b.set_defaults(func=cmd_dataset_build)
    registry["dataset build"] = b

    p = sub.add_parser("split", help="scene-level train/val/test manifest")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-scenes", type=int, default=1)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_split)
    registry["split"] = p

    p = sub.add_parser("eval", help="MAE/RMSE report between two sample files")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", default="eval_report.json")
    p.add_argument("--csv", help="also write per-height CSV")
    p.add_argument("--masked", action="store_true",
                   help="evaluate only oracle-valid cells")
    p.set_defaults(func=cmd_eval)
    registry["eval"] = p

    p = sub.add_parser("render", help="PNG heatmap of one height slice")
    p.add_argument("--sample", required=True)
    p.add_argument("--id", default=None, help="sample id (default: the only one)")
    p.add_argument("--height", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vmin", type=float, default=40.0)
    p.add_argument("--vmax", type=float, default=160.0)
    p.add_argument("--cmap", default="viridis")
    p.set_defaults(func=cmd_render)
    registry["render"] = p

    return parser, registry


def _apply_config(argv: list[str], registry: dict[str, argparse.ArgumentParser]) -> None:
    if "--config" not in argv:
        return
    path = argv[argv.index("--config") + 1]
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from exc
    positional = [a for a in argv if not a.startswith("-") and a != path]
    command = " ".join(positional[:2]) if positional[:1] == ["dataset"] else (
        positional[0] if positional else ""
    )
    target = registry.get(command)
    if target is None:
        raise FormatError(f"config given but subcommand {command!r} not recognized")
    valid = {a.dest for a in target._actions}
    unknown = set(cfg) - valid
    if unknown:
        raise FormatError(f"unknown config keys for {command!r}: {sorted(unknown)}")
    target.set_defaults(**cfg)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, registry = build_parser()
    try:
        _apply_config(argv, registry)
    except FormatError as exc:
        print(f"voxelray: {exc}", file=sys.stderr)
        return EXIT_INPUT
    args = parser.parse_args(argv)   # argparse exits with code 2 on usage errors
    _echo_config(args)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"voxelray: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, OSError) as exc:
        print(f"voxelray: i/o error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except VoxelrayError as exc:
        print(f"voxelray: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
