"""Command-line surface.

Every subcommand is a thin wrapper over one module operation.  Failures
exit nonzero after printing a single machine-readable JSON line on stderr:
``{"error": "<ExceptionType>", "message": "..."}``.

The default model path comes from the TONEGUIDE_MODEL environment variable
when --model is not given.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import engine, mos, skintone, trainer
from .color import load_png, save_png
from .errors import ToneguideError

MODEL_ENV_VAR = "TONEGUIDE_MODEL"


def _model_path(args) -> str:
    path = args.model or os.environ.get(MODEL_ENV_VAR)
    if not path:
        raise ToneguideError(
            f"no model given: pass --model or set {MODEL_ENV_VAR}"
        )
    return path


def _add_model_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--model",
        default=None,
        help=f"checkpoint path (default: ${MODEL_ENV_VAR})",
    )


def _parse_label(text: str):
    if text.lower() == "auto":
        return engine.AUTO_LABEL
    if text.lower() == "none":
        return None
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toneguide",
        description="Score-guided photo enhancement with generated 1D curves and fused 3D grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a dataset manifest")
    p.add_argument("--manifest", required=True, help="CSV: raw_path,target_path,score,label,mask_path")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lut-bins", type=int, default=33)
    p.add_argument("--lut-dim", type=int, default=33)
    p.add_argument("--basis-count", type=int, default=3)
    p.add_argument("--no-label", action="store_true", help="natural-image mode (no label plane)")
    p.add_argument("--no-1d", action="store_true", help="skip the 1D curve stage")
    p.add_argument("--score-range", type=float, nargs=2, default=(-1.0, 1.0), metavar=("LO", "HI"))
    p.add_argument("--label-range", type=float, nargs=2, default=(1.0, 10.0), metavar=("LO", "HI"))
    p.add_argument("--cond-size", type=int, default=256)
    p.add_argument("--centers", default=None, help="centers file for mask-based labeling")
    p.add_argument("--log", default=None, help="write the per-epoch loss CSV here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="adapt an existing model to user pairs")
    _add_model_arg(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", default=None)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("enhance", help="enhance one image at a guide score")
    _add_model_arg(p)
    p.add_argument("--in", dest="input", required=True, help="input PNG")
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--score", type=float, required=True)
    p.add_argument("--label", type=_parse_label, default=engine.AUTO_LABEL,
                   help="1..10, 'auto', or 'none'")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--mask", default=None, help="PNG mask for auto labeling")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("mos", help="screen ratings and compute per-image MOS")
    p.add_argument("--ratings", required=True, help="CSV: subject_id,image_id,rating")
    p.add_argument("--out", required=True, help="MOS output CSV")
    p.add_argument("--report", default=None, help="rejection report JSON")
    p.set_defaults(func=cmd_mos)

    p = sub.add_parser("cluster", help="cluster Lab points into skin-tone centers")
    p.add_argument("--points", required=True, help="CSV with columns L,a,b")
    p.add_argument("--out", required=True, help="centers file output path")
    p.add_argument("--k", type=int, default=skintone.CENTER_COUNT)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("perturb", help="shift an image in Lab to make a synthetic target")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--delta-a", type=float, default=None)
    p.add_argument("--delta-b", type=float, default=None)
    p.add_argument("--delta-l", type=float, default=0.0)
    p.add_argument("--mode", choices=("skin", "natural"), default="skin")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("serve", help="run the HTTP enhancement service")
    _add_model_arg(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ratings", default=None, help="append-only live ratings CSV")
    p.set_defaults(func=cmd_serve)

    return parser


def cmd_train(args) -> int:
    config = trainer.TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        lut_bins=args.lut_bins,
        lut_dim=args.lut_dim,
        basis_count=args.basis_count,
        use_label=not args.no_label,
        use_1d_luts=not args.no_1d,
        score_range=tuple(args.score_range),
        label_range=tuple(args.label_range),
        cond_size=args.cond_size,
    )
    centers = skintone.load_centers(args.centers) if args.centers else None
    pairs = trainer.read_manifest(args.manifest)
    samples = trainer.build_dataset(pairs, config, centers)
    result = trainer.train(samples, config, centers=centers)
    trainer.save_checkpoint(result.checkpoint, args.out)
    if args.log:
        trainer.write_loss_log(result.log, args.log)
    final = result.log[-1].total if result.log else float("nan")
    print(f"trained {config.epochs} epochs on {len(samples)} samples; final loss {final:.6g}")
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_finetune(args) -> int:
    checkpoint = trainer.load_checkpoint(_model_path(args))
    config = trainer.config_from_checkpoint(checkpoint, seed=args.seed)
    pairs = trainer.read_manifest(args.manifest)
    samples = trainer.load_pairs(pairs, config, checkpoint.centers)
    result = trainer.finetune(
        checkpoint, samples, epochs=args.epochs, lr=args.lr, seed=args.seed
    )
    trainer.save_checkpoint(result.checkpoint, args.out)
    if args.log:
        trainer.write_loss_log(result.log, args.log)
    final = result.log[-1].total if result.log else float("nan")
    print(f"finetuned {args.epochs} epochs on {len(samples)} samples; final loss {final:.6g}")
    return 0


def cmd_enhance(args) -> int:
    checkpoint = trainer.load_checkpoint(_model_path(args))
    image = load_png(args.input)
    mask = None
    if args.mask:
        mask = load_png(args.mask).data[..., 0] > 0.5
    req = engine.EnhanceRequest(
        image=image, score=args.score, label=args.label, rounds=args.rounds, mask=mask
    )
    out = engine.enhance(checkpoint, req)
    save_png(out, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_mos(args) -> int:
    table = mos.read_ratings_csv(args.ratings)
    result = mos.process_ratings(table)
    mos.write_mos_csv(result, args.out)
    if args.report:
        mos.write_rejection_json(result.report, args.report)
    print(
        f"{len(result.entries)} images scored; "
        f"{len(result.report.rejected_subjects)} subjects rejected; "
        f"{len(result.report.outlier_pairs)} outlier ratings"
    )
    return 0


def cmd_cluster(args) -> int:
    with open(args.points, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"L", "a", "b"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ToneguideError(f"points CSV must have columns {sorted(required)}")
        points = np.array(
            [[float(row["L"]), float(row["a"]), float(row["b"])] for row in reader]
        )
    centers = skintone.kmeans_lab(points, k=args.k, seed=args.seed)
    labels = np.array([skintone.classify(p, centers) for p in points])
    skintone.save_centers(centers, args.out)
    try:
        sil = skintone.silhouette(points, labels)
        print(f"{args.k} centers written to {args.out}; silhouette {sil:.4f}")
    except ToneguideError:
        print(f"{args.k} centers written to {args.out}")
    return 0


def cmd_perturb(args) -> int:
    image = load_png(args.input)
    out = trainer.synth_perturb(
        image,
        delta_a=args.delta_a,
        delta_b=args.delta_b,
        delta_l=args.delta_l,
        seed=args.seed,
        mode=args.mode,
    )
    save_png(out, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    model_path = _model_path(args)
    app = create_app(
        checkpoint_path=model_path,
        ratings_path=args.ratings,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ToneguideError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
