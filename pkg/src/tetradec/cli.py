"""Command-line interface binding the library into reproducible pipelines.

Subcommands: synth, encode, decode, eval, eval-usecase, fit-mask, rectify,
loss-check, render-heat. Structured data is JSON, images are PPM/PGM, tensors
use the single-header binary container (see fileio). Exit codes: 0 success,
1 failed checks, 2 malformed input.

Numeric flags left unset fall back to --config JSON entries (same key names,
underscores), then to built-in defaults. TETRADEC_SEED provides a global seed
fallback.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import sys
from pathlib import Path

import numpy as np

from . import evalkit, fileio, losses, synthgen
from .decoder import DecodeConfig, GroupingMode, NetworkOutput, ScoreSign, decode
from .errors import FormatError, TetradecError
from .geometry import Point2, Tetragon, rectify
from .gt_encoder import encode_targets
from .mask_fit import fit_tetragon
from .render import render_heat_embedding

CORNER_ORDER = ("tl", "tr", "bl", "br")


def _env_seed() -> int:
    try:
        return int(os.environ.get("TETRADEC_SEED", "0"))
    except ValueError:
        return 0


def _load_config(path) -> dict:
    if path is None:
        return {}
    doc = fileio._load_json(path)
    if not isinstance(doc, dict):
        raise FormatError(path, 0, "config must be a JSON object")
    return doc


def _resolve(args, config: dict, spec: dict):
    """Final value per key: flag if set, else config entry, else default."""
    out = {}
    for key, default in spec.items():
        v = getattr(args, key)
        if v is None:
            v = config.get(key, default)
        out[key] = v
    return out


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    config = _load_config(args.config)
    p = _resolve(args, config, {
        "images": 1, "seed": _env_seed(), "img_w": 512, "img_h": 512,
        "objects_min": 1, "objects_max": 4, "warp": 0.15, "min_area": 400.0,
        "classes": 1, "stride": 4, "heat_sigma": 0.0, "embed_sigma": 0.0,
        "offset_sigma": 0.0, "distractors": 0,
    })
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ann_images = []
    out_images = []
    for i in range(int(p["images"])):
        scene_cfg = synthgen.SceneConfig(
            img_w=int(p["img_w"]), img_h=int(p["img_h"]),
            n_objects=(int(p["objects_min"]), int(p["objects_max"])),
            warp_strength=float(p["warp"]), min_area=float(p["min_area"]),
            seed=int(p["seed"]) + i, num_classes=int(p["classes"]))
        noise_cfg = synthgen.NoiseConfig(
            heat_sigma=float(p["heat_sigma"]), embed_sigma=float(p["embed_sigma"]),
            offset_sigma=float(p["offset_sigma"]),
            n_distractor_peaks=int(p["distractors"]),
            seed=int(p["seed"]) + 100000 + i)
        anns = synthgen.generate_scene(scene_cfg)
        net = synthgen.simulate_output(anns, noise_cfg, int(p["classes"]),
                                       int(p["img_w"]), int(p["img_h"]),
                                       stride=int(p["stride"]))
        iid = f"scene_{i:04d}"
        names = {}
        for kind, arr in (("heat", net.heat), ("embed", net.embed),
                          ("offset", net.offset)):
            name = f"{iid}.{kind}.tns"
            fileio.write_tensor(out_dir / name, arr)
            names[kind] = name
        ann_images.append(fileio.ImageAnnotations(
            iid, int(p["img_w"]), int(p["img_h"]), anns))
        out_images.append({"id": iid, **names})
    fileio.write_annotations(out_dir / "annotations.json", ann_images)
    meta = {"stride": int(p["stride"]), "num_classes": int(p["classes"]),
            "images": out_images}
    (out_dir / "outputs.json").write_text(json.dumps(meta, indent=1) + "\n",
                                          encoding="utf-8")
    print(f"wrote {len(out_images)} scene(s) to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# encode
# ---------------------------------------------------------------------------

def _cmd_encode(args) -> int:
    images = fileio.read_annotations(args.annotations)
    num_classes = args.classes
    if num_classes is None:
        num_classes = 1 + max(
            (a.class_id for img in images for a in img.objects), default=0)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta_images = []
    for img in images:
        tm = encode_targets(img.objects, num_classes, img.width, img.height,
                            stride=args.stride)
        heat_name = f"{img.id}.heat.tns"
        offset_name = f"{img.id}.offset.tns"
        fileio.write_tensor(out_dir / heat_name, tm.heat)
        fileio.write_tensor(out_dir / offset_name, tm.offset)
        meta_images.append({
            "id": img.id, "heat": heat_name, "offset": offset_name,
            "objects": [
                {
                    "class": o.class_id,
                    "cells": o.cells.tolist(),
                    "subpixel": o.subpixel.tolist(),
                }
                for o in tm.objects
            ],
        })
    meta = {"stride": args.stride, "num_classes": num_classes,
            "images": meta_images}
    (out_dir / "targets.json").write_text(json.dumps(meta, indent=1) + "\n",
                                          encoding="utf-8")
    print(f"encoded {len(meta_images)} image(s) to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# decode
# ---------------------------------------------------------------------------

def _decode_worker(task):
    iid, heat_path, embed_path, offset_path, stride, cfg = task
    net = NetworkOutput(
        heat=fileio.read_tensor(heat_path),
        embed=fileio.read_tensor(embed_path),
        offset=fileio.read_tensor(offset_path),
        stride=stride,
    )
    return iid, decode(net, cfg)


def _cmd_decode(args) -> int:
    config = _load_config(args.config)
    p = _resolve(args, config, {
        "k": 20, "heat_floor": 0.1, "embed_tol": 0.5, "nms_iou": 0.5,
        "score_sign": "subtract_pull", "grouping": "exhaustive", "jobs": 1,
    })
    cfg = DecodeConfig(
        k=int(p["k"]), heat_floor=float(p["heat_floor"]),
        embed_tol=float(p["embed_tol"]), det_nms_iou=float(p["nms_iou"]),
        score_sign=ScoreSign(p["score_sign"]),
        grouping=GroupingMode(p["grouping"]))
    meta_path = Path(args.outputs)
    meta = fileio._load_json(meta_path)
    if not isinstance(meta, dict) or not isinstance(meta.get("images"), list):
        raise FormatError(meta_path, 0, 'outputs meta must contain "images"')
    stride = int(meta.get("stride", 4))
    base = meta_path.parent
    tasks = [
        (img["id"], base / img["heat"], base / img["embed"],
         base / img["offset"], stride, cfg)
        for img in meta["images"]
    ]
    jobs = int(p["jobs"])
    if jobs > 1:
        with multiprocessing.Pool(jobs) as pool:
            results = pool.map(_decode_worker, tasks)
    else:
        results = [_decode_worker(t) for t in tasks]
    fileio.write_detections(args.out, results)
    total = sum(len(d) for _, d in results)
    print(f"decoded {total} detection(s) over {len(results)} image(s)")
    return 0


# ---------------------------------------------------------------------------
# eval / eval-usecase
# ---------------------------------------------------------------------------

def _aligned_dets(det_path, ann_images):
    det_map = dict(fileio.read_detections(det_path))
    return [det_map.get(img.id, []) for img in ann_images]


def _cmd_eval(args) -> int:
    ann_images = fileio.read_annotations(args.annotations)
    dets = _aligned_dets(args.detections, ann_images)
    gts = [img.objects for img in ann_images]
    report = evalkit.average_precision(dets, gts, jobs=args.jobs)
    print(json.dumps(report.to_json_dict(), indent=1))
    if args.csv:
        lines = ["threshold,ap"]
        lines += [f"{t:.2f},{v}" for t, v in report.ap_at.items()]
        Path(args.csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _cmd_eval_usecase(args) -> int:
    ann_images = fileio.read_annotations(args.annotations)
    dets = _aligned_dets(args.detections, ann_images)
    gts = [img.objects for img in ann_images]
    report = evalkit.usecase_metrics(dets, gts)
    print(json.dumps(report.to_json_dict(), indent=1))
    return 0


# ---------------------------------------------------------------------------
# fit-mask / rectify
# ---------------------------------------------------------------------------

def _tetragon_json_dict(t: Tetragon) -> dict:
    return {key: [p.x, p.y] for key, p in zip(CORNER_ORDER, t.corners())}


def _cmd_fit_mask(args) -> int:
    mask = fileio.read_mask(args.mask)
    result = fit_tetragon(mask, max_rounds=args.max_rounds)
    doc = {
        "corners": _tetragon_json_dict(result.tetragon),
        "iou": result.iou,
        "iterations": result.iterations,
    }
    text = json.dumps(doc, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def _read_image_any(path):
    data = Path(path).read_bytes()
    if data[:2] == b"P6":
        return fileio.read_ppm(path)
    if data[:2] == b"P5":
        return fileio.read_pgm(path)[None]
    raise FormatError(path, 0, "expected a P5 or P6 netpbm image")


def _parse_corners_flag(text: str) -> Tetragon:
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 8:
        raise ValueError("--corners needs 8 comma-separated numbers: "
                         "tlx,tly,trx,try,blx,bly,brx,bry")
    pts = [Point2(vals[i], vals[i + 1]) for i in range(0, 8, 2)]
    return Tetragon(*pts)


def _cmd_rectify(args) -> int:
    image = _read_image_any(args.image)
    if args.corners:
        t = _parse_corners_flag(args.corners)
    elif args.tetragon:
        doc = fileio._load_json(args.tetragon)
        t = fileio._corners_to_tetragon(doc, "tetragon", args.tetragon)
    else:
        raise ValueError("rectify needs --corners or --tetragon")
    out = rectify(image, t, args.out_w, args.out_h)
    if out.shape[0] == 3:
        fileio.write_ppm(args.out, out)
    else:
        fileio.write_pgm(args.out, out[0])
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# loss-check / render-heat
# ---------------------------------------------------------------------------

def _cmd_loss_check(args) -> int:
    failures = 0

    # fixed pull/push fixtures with hand-derived values
    from .gt_encoder import ObjectCorners
    embed = np.zeros((4, 8, 8))
    cells = np.array([[0, 0], [0, 4], [4, 0], [4, 4]])
    obj = ObjectCorners(0, cells, np.zeros((4, 2)))
    embed[3, 4, 4] = 4.0
    fixtures = [
        ("pull fixture (0,0,0,4) -> 12", losses.pull_loss(embed, [obj]), 12.0),
    ]
    e2 = np.zeros((4, 8, 8))
    cells2 = cells + 2
    obj2 = ObjectCorners(0, cells2, np.zeros((4, 2)))
    for i in range(4):
        e2[i, cells2[i, 0], cells2[i, 1]] = 0.5
    fixtures.append(
        ("push fixture means (0, 0.5) -> 0.5", losses.push_loss(e2, [obj, obj2]), 0.5))
    for label, got, want in fixtures:
        ok = abs(got - want) <= 1e-6
        print(f"{'PASS' if ok else 'FAIL'}  {label}  (got {got:.8f})")
        failures += 0 if ok else 1

    for component in ("detection", "offset", "pull", "push"):
        for seed in range(args.seeds):
            err = losses.gradient_check(component, seed=seed, h=args.step)
            ok = err < args.tol
            print(f"{'PASS' if ok else 'FAIL'}  {component} gradients seed {seed}: "
                  f"max rel err {err:.3e}")
            failures += 0 if ok else 1
    return 1 if failures else 0


def _cmd_render_heat(args) -> int:
    heat = fileio.read_tensor(args.heat)
    embed = fileio.read_tensor(args.embed)
    if heat.ndim != 4 or embed.ndim != 3:
        raise FormatError(args.heat, 0,
                          "render-heat needs heat (4,C,Hf,Wf) and embed (4,Hf,Wf)")
    for i, name in enumerate(CORNER_ORDER):
        rgb = render_heat_embedding(heat[i, args.class_id], embed[i],
                                    scale=args.scale)
        out_path = f"{args.out}_{name}.ppm"
        fileio.write_ppm(out_path, rgb)
        print(f"wrote {out_path}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tetradec")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic scenes + simulated outputs")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    for flag in ("images", "seed", "img-w", "img-h", "objects-min",
                 "objects-max", "classes", "stride", "distractors"):
        p.add_argument(f"--{flag}", type=int, default=None)
    for flag in ("warp", "min-area", "heat-sigma", "embed-sigma", "offset-sigma"):
        p.add_argument(f"--{flag}", type=float, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("encode", help="annotations -> ground-truth target maps")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--stride", type=int, default=4)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help="network output tensors -> detections")
    p.add_argument("--outputs", required=True, help="outputs.json metadata file")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--heat-floor", type=float, default=None)
    p.add_argument("--embed-tol", type=float, default=None)
    p.add_argument("--nms-iou", type=float, default=None)
    p.add_argument("--score-sign", choices=["subtract_pull", "add_pull"], default=None)
    p.add_argument("--grouping", choices=["exhaustive", "greedy_anchor"], default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("eval", help="COCO-protocol AP report")
    p.add_argument("--detections", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("eval-usecase", help="two-sides-per-image use-case metrics")
    p.add_argument("--detections", required=True)
    p.add_argument("--annotations", required=True)
    p.set_defaults(func=_cmd_eval_usecase)

    p = sub.add_parser("fit-mask", help="fit a tetragon to a binary mask")
    p.add_argument("--mask", required=True, help="P5 PGM or RLE JSON")
    p.add_argument("--max-rounds", type=int, default=6)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_fit_mask)

    p = sub.add_parser("rectify", help="warp a tetragon region to a rectangle")
    p.add_argument("--image", required=True)
    p.add_argument("--corners", default=None,
                   help="tlx,tly,trx,try,blx,bly,brx,bry")
    p.add_argument("--tetragon", default=None, help="JSON with a corners object")
    p.add_argument("--out-w", type=int, required=True)
    p.add_argument("--out-h", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rectify)

    p = sub.add_parser("loss-check", help="verify losses against finite differences")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-3)
    p.set_defaults(func=_cmd_loss_check)

    p = sub.add_parser("render-heat", help="render heat/embedding overlays to PPM")
    p.add_argument("--heat", required=True)
    p.add_argument("--embed", required=True)
    p.add_argument("--class-id", type=int, default=0)
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=_cmd_render_heat)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TetradecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
