"""plpredict: train the residual regressor on a voxel dataset and write
prediction files its producer's tooling can evaluate."""

from __future__ import annotations

import argparse
import json
import sys

from .data import DataError, Manifest, list_sample_ids
from .predict import write_predictions
from .train import TrainConfig, load_archive, save_archive, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plpredict", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit the regressor on a dataset split")
    t.add_argument("--dataset", required=True)
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True, help="weights archive (.pt)")
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--batch-size", type=int, default=2)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--weight-decay", type=float, default=1e-2)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--patience", type=int, default=10)
    t.add_argument("--max-steps", type=int, default=None)
    t.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write reconstructed path-loss heatmaps")
    p.add_argument("--dataset", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ids", help="comma-separated sample ids (default: all)")
    p.add_argument("--manifest", help="restrict to one split of a manifest")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_predict)
    return parser


def cmd_train(args) -> int:
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
        patience=args.patience,
        max_steps=args.max_steps,
    )
    manifest = Manifest.load(args.manifest)
    result = train(args.dataset, manifest, cfg)
    save_archive(args.out, result, cfg)
    last = result.history[-1] if result.history else {}
    print(
        f"[plpredict] trained {result.steps} steps, "
        f"best val RMSE {result.best_val_loss:.3f} dB, "
        f"last {json.dumps(last)} -> {args.out}"
    )
    return 0


def cmd_predict(args) -> int:
    model, stats, target = load_archive(args.weights)
    if args.ids:
        ids = args.ids.split(",")
    elif args.manifest:
        ids = Manifest.load(args.manifest).ids(args.split)
    else:
        ids = list_sample_ids(args.dataset)
    if not ids:
        raise DataError("no samples selected for prediction")
    write_predictions(args.dataset, args.out, ids, model, stats, target)
    print(f"[plpredict] wrote {len(ids)} predictions -> {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(sys.argv[1:] if argv is None else argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"plpredict: input error: {exc}", file=sys.stderr)
        return 3
    except (FileNotFoundError, OSError) as exc:
        print(f"plpredict: i/o error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"plpredict: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
