"""Command-line entry point: scan -> train -> evaluate -> explain -> study."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, backbones, data, gradcam, metrics, model, study
from .errors import EventcamError

log = logging.getLogger("eventcam")


def _out_dir(args) -> Path:
    out = os.environ.get("EVENTCAM_OUTPUT_DIR") or args.out
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_run_record(out: Path, args) -> None:
    import torch
    record = {
        "argv": sys.argv[1:],
        "config": {k: v for k, v in vars(args).items() if k != "func"},
        "versions": {
            "eventcam": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "torch": torch.__version__,
        },
    }
    (out / "run_record.json").write_text(json.dumps(record, indent=2, sort_keys=True, default=str))


def _load_manifest(args) -> data.DatasetManifest:
    if getattr(args, "manifest", None):
        return data.DatasetManifest.load(args.manifest)
    return data.scan(args.data, seed=args.seed, split_fractions=tuple(args.fractions))


def cmd_scan(args) -> int:
    out = _out_dir(args)
    manifest = data.scan(args.data, seed=args.seed, split_fractions=tuple(args.fractions))
    manifest.save(out / "manifest.json")
    _write_run_record(out, args)
    print(f"scanned {len(manifest.samples)} samples in {len(manifest.classes)} classes "
          f"-> {out / 'manifest.json'}")
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    manifest = _load_manifest(args)
    manifest.save(out / "manifest.json")
    config = model.ModelConfig(
        backbone_id=args.backbone,
        input_size=args.input_size,
        num_classes=args.classes if args.classes else len(manifest.classes),
        target_layer=args.target_layer or "",
        lr_backbone=args.lr_backbone,
        lr_head=args.lr_head,
        epochs=args.epochs,
        batch_size=args.batch_size,
    )
    bundle = model.build(config, seed=args.seed)
    record = model.finetune(bundle, manifest, seed=args.seed)
    bundle.save(out / "checkpoint.pt")
    (out / "train_log.jsonl").write_text(record.to_jsonl() + "\n")
    _write_run_record(out, args)
    print(f"trained {config.epochs} epochs; best val weighted F1 "
          f"{record.best_val_f1:.4f} (epoch {record.best_epoch}) -> {out / 'checkpoint.pt'}")
    return 0


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    manifest = _load_manifest(args)
    bundle = model.ModelBundle.load(args.checkpoint)
    report = metrics.evaluate(bundle, manifest, args.split)
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.to_text() + "\n")
    print(report.to_text())

    if args.overlays:
        overlay_dir = out / "overlays"
        overlay_png = {}
        for sample_id, _true, pred in report.per_sample:
            image = data.load_image(manifest, sample_id, bundle.config.input_size)
            amap = gradcam.grad_cam(bundle, image, pred)
            rgb = np.clip(np.rint((image + 1.0) * 127.5), 0, 255).astype(np.uint8)
            overlay = gradcam.render_overlay(rgb, amap, args.blend_alpha)
            path = overlay_dir / (sample_id + ".png")
            path.parent.mkdir(parents=True, exist_ok=True)
            gradcam.save_overlay_png(overlay, path)
            amap.save_png(overlay_dir / (sample_id + ".map.png"))
            overlay_png[sample_id] = path.read_bytes()
        gallery = metrics.misclassification_gallery(report, overlay_png)
        (out / "gallery.html").write_text(gallery)
        print(f"wrote {len(overlay_png)} overlays and gallery -> {out}")
    _write_run_record(out, args)
    return 0


def cmd_explain(args) -> int:
    out = _out_dir(args)
    bundle = model.ModelBundle.load(args.checkpoint)
    image = _load_single_image(args.image, bundle.config.input_size)
    if args.class_name is not None:
        if bundle.class_names is None or args.class_name not in bundle.class_names:
            raise EventcamError(f"checkpoint has no class named {args.class_name!r}; "
                                f"known: {bundle.class_names}")
        target = bundle.class_names.index(args.class_name)
    elif args.class_id is not None:
        target = args.class_id
    else:
        ids, _ = bundle.predict(image)
        target = int(ids[0])
    fn = gradcam.cam if args.method == "cam" else gradcam.grad_cam
    amap = fn(bundle, image, target)
    rgb = np.clip(np.rint((image + 1.0) * 127.5), 0, 255).astype(np.uint8)
    overlay = gradcam.render_overlay(rgb, amap, args.blend_alpha)
    stem = Path(args.image).stem
    gradcam.save_overlay_png(overlay, out / f"{stem}_overlay.png")
    amap.save_png(out / f"{stem}_map.png")
    _write_run_record(out, args)
    print(f"class {target}: overlay and map -> {out}")
    return 0


def _load_single_image(path, input_size):
    from PIL import Image
    with Image.open(path) as im:
        im = im.convert("RGB").resize((input_size, input_size), Image.BILINEAR)
        return np.asarray(im, dtype=np.float32) / 127.5 - 1.0


def _build_study(args) -> tuple[study.Study, dict]:
    report_doc = json.loads(Path(args.report).read_text())
    per_sample = [(s["sample_id"], s["true"], s["pred"]) for s in report_doc["per_sample"]]
    # report JSON is written with sorted keys and scan() sorts class dirs, so
    # the key order of "classes" matches the class-id order of the matrix
    rebuilt = metrics.report_from_matrix(
        np.array(report_doc["confusion_matrix"]), list(report_doc["classes"]), per_sample)
    overlay_root = Path(args.overlays)
    overlay_ids = [sid for sid, _, _ in per_sample
                   if (overlay_root / (sid + ".png")).is_file()]
    st = study.Study.from_report(rebuilt, overlay_ids,
                                 votes_needed=args.votes_needed,
                                 vote_log_path=getattr(args, "vote_log", None))
    return st, report_doc


def cmd_study_serve(args) -> int:
    import uvicorn
    from .service import create_app, directory_media_resolver
    st, _ = _build_study(args)
    store = study.StudyStore()
    store.add(st)
    app = create_app(store,
                     media_resolver=directory_media_resolver(args.data, args.overlays),
                     static_dir=args.ui)
    print(f"study {st.study_id} with {len(st.tasks)} tasks; serving on "
          f"http://{args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_study_report(args) -> int:
    st, _ = _build_study(args)
    st.vote_log_path = None  # replay must not re-append to the log it reads
    st.replay_log(args.votes)
    print(json.dumps(st.report().to_dict(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eventcam",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", default="eventcam_out",
                       help="output directory (EVENTCAM_OUTPUT_DIR overrides)")
        p.add_argument("--seed", type=int, default=data.DEFAULT_SEED)

    p = sub.add_parser("scan", help="index a class-per-directory dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--fractions", type=float, nargs=3, default=list(data.DEFAULT_FRACTIONS))
    add_common(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("train", help="fine-tune a pretrained backbone")
    p.add_argument("--data")
    p.add_argument("--manifest")
    p.add_argument("--classes", type=int, default=0)
    p.add_argument("--backbone", default="toy-cnn", choices=backbones.KNOWN_BACKBONES)
    p.add_argument("--target-layer", default="")
    p.add_argument("--input-size", type=int, default=96)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=120)
    p.add_argument("--lr-backbone", type=float, default=1e-5)
    p.add_argument("--lr-head", type=float, default=1e-3)
    p.add_argument("--fractions", type=float, nargs=3, default=list(data.DEFAULT_FRACTIONS))
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="classification report on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--manifest")
    p.add_argument("--split", default="test", choices=data.SPLITS)
    p.add_argument("--overlays", action="store_true",
                   help="render per-sample overlays and the misclassification gallery")
    p.add_argument("--blend-alpha", type=float, default=gradcam.DEFAULT_BLEND_ALPHA)
    p.add_argument("--fractions", type=float, nargs=3, default=list(data.DEFAULT_FRACTIONS))
    add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="activation map and overlay for one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--class-name")
    p.add_argument("--class-id", type=int)
    p.add_argument("--method", default="gradcam", choices=["gradcam", "cam"])
    p.add_argument("--blend-alpha", type=float, default=gradcam.DEFAULT_BLEND_ALPHA)
    add_common(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("study-serve", help="serve the annotation study API")
    p.add_argument("--report", required=True, help="report.json from evaluate")
    p.add_argument("--overlays", required=True, help="overlay directory from evaluate")
    p.add_argument("--data", required=True, help="dataset root for original images")
    p.add_argument("--votes-needed", type=int, default=study.DEFAULT_VOTES_NEEDED)
    p.add_argument("--vote-log", default="votes.jsonl")
    p.add_argument("--ui", help="static directory with the annotation UI bundle")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    add_common(p)
    p.set_defaults(func=cmd_study_serve)

    p = sub.add_parser("study-report", help="aggregate a persisted vote log")
    p.add_argument("--report", required=True)
    p.add_argument("--overlays", required=True)
    p.add_argument("--votes", required=True, help="votes.jsonl to replay")
    p.add_argument("--votes-needed", type=int, default=study.DEFAULT_VOTES_NEEDED)
    add_common(p)
    p.set_defaults(func=cmd_study_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EventcamError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
