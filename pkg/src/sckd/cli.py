"""Command-line entry point.

Subcommands cover the whole workflow: ``synth`` writes a dataset,
``pretrain`` trains the fusion teacher, ``distill`` trains the radar-only
student from a frozen teacher, ``eval`` scores a checkpoint on the
validation split, ``ablate`` runs the supervision-recipe comparison, and
``heatmap`` dumps an encoder activation grid as CSV.  All randomness
flows from one ``--seed``; rerunning a command with identical inputs
produces identical files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import SCKDError
from .frames import DatasetManifest, Modality, Split, read_frame
from .metrics import heatmap
from .models import StudentNet
from .scene import make_dataset
from .train import (
    distill_student,
    evaluate_checkpoint,
    load_pairs,
    pretrain_teacher,
    run_ablation,
)
from .voxel import voxelize


def _load_config(args) -> config_mod.RunConfig:
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise SCKDError(f"config file not found: {path}")
        cfg = config_mod.load_config(path)
    else:
        cfg = config_mod.RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg.validate()


def _open_log(out_dir: Path, name: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    handle = open(out_dir / name, "w")
    return handle, lambda line: print(line, file=handle)


def _manifest(data_dir) -> DatasetManifest:
    path = Path(data_dir)
    if path.is_dir():
        path = path / "manifest.txt"
    if not path.exists():
        raise SCKDError(f"manifest not found: {path}")
    return DatasetManifest.load(path)


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out)
    manifest = make_dataset(
        cfg.dataset.n_labeled,
        cfg.dataset.n_unlabeled,
        cfg.dataset.n_val,
        cfg.scene_spec(),
        out_dir,
    )
    config_mod.save_config(cfg, out_dir / "config.yaml")
    counts = {split.value: len(manifest.paths(split)) // 2 for split in Split}
    print(
        f"wrote {sum(counts.values())} frames to {out_dir} "
        f"({', '.join(f'{k}={v}' for k, v in counts.items())})"
    )
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_config(args)
    manifest = _manifest(args.data)
    pairs = load_pairs(manifest, Split.LABELED_TRAIN)
    out_dir = Path(args.out)
    handle, log = _open_log(out_dir, "pretrain.log")
    try:
        ckpt = pretrain_teacher(pairs, cfg, log=log)
    finally:
        handle.close()
    path = out_dir / "teacher.ckpt"
    save_checkpoint(ckpt, path)
    print(f"teacher checkpoint written to {path}")
    return 0


def cmd_distill(args) -> int:
    cfg = _load_config(args)
    manifest = _manifest(args.data)
    teacher_path = Path(args.teacher)
    if not teacher_path.exists():
        raise SCKDError(f"teacher checkpoint not found: {teacher_path}")
    labeled = load_pairs(manifest, Split.LABELED_TRAIN)
    unlabeled = load_pairs(manifest, Split.UNLABELED_TRAIN)
    out_dir = Path(args.out)
    handle, log = _open_log(out_dir, "distill.log")
    try:
        ckpt = distill_student(teacher_path, labeled, unlabeled, cfg, log=log)
    finally:
        handle.close()
    path = out_dir / "student.ckpt"
    save_checkpoint(ckpt, path)
    print(f"student checkpoint written to {path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    manifest = _manifest(args.data)
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise SCKDError(f"checkpoint not found: {ckpt_path}")
    ckpt = load_checkpoint(ckpt_path)
    val = load_pairs(manifest, Split.VAL)
    report = evaluate_checkpoint(ckpt, val, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(report.render_text())
    (out_dir / "report.kv").write_text(report.render_kv())
    print(report.render_text(), end="")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    manifest = _manifest(args.data)
    out_dir = Path(args.out)
    handle, log = _open_log(out_dir, "ablate.log")
    try:
        table = run_ablation(cfg, manifest, log=log)
    finally:
        handle.close()
    (out_dir / "table.txt").write_text(table.render_text())
    (out_dir / "table.kv").write_text(table.render_kv())
    print(table.render_text(), end="")
    return 0


def cmd_heatmap(args) -> int:
    from .train import build_model_from_checkpoint

    cfg = _load_config(args)
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise SCKDError(f"checkpoint not found: {ckpt_path}")
    frame_path = Path(args.frame)
    if not frame_path.exists():
        raise SCKDError(f"frame file not found: {frame_path}")
    frame = read_frame(frame_path)
    if frame.modality is not Modality.RADAR:
        raise SCKDError(
            f"heatmap wants a radar frame, {frame_path} is {frame.modality.name}"
        )
    model = build_model_from_checkpoint(load_checkpoint(ckpt_path), cfg)
    encoder = (
        model.radar_encoder
        if isinstance(model, StudentNet)
        else model.radar_encoder
    )
    bev = encoder.encode(voxelize(frame, cfg.grid.radar_grid()))
    grid_csv = heatmap(bev.data.detach().numpy())
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out_path, grid_csv, fmt="%.8e", delimiter=",")
    print(f"heatmap ({grid_csv.shape[0]}x{grid_csv.shape[1]}) written to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sckd",
        description="Radar-only 3D detection via semi-supervised "
        "cross-modality distillation on synthetic scenes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--out", required=True, help="dataset output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain", help="pretrain the fusion teacher")
    common(p)
    p.add_argument("--data", required=True, help="dataset dir or manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("distill", help="distill the radar-only student")
    common(p)
    p.add_argument("--data", required=True, help="dataset dir or manifest")
    p.add_argument("--teacher", required=True, help="teacher checkpoint")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the val split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset dir or manifest")
    p.add_argument("--out", required=True, help="report output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the supervision-recipe comparison")
    common(p)
    p.add_argument("--data", required=True, help="dataset dir or manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("heatmap", help="export an encoder BEV heatmap as CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--frame", required=True, help="radar frame file")
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SCKDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing file {exc.filename}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
