"""Training orchestration: teacher pretraining, student distillation,
supervised baseline, evaluation, and the ablation/scaling experiment
runner.

Everything is deterministic given (config, seed): weight init comes from
a torch seed derived from the run seed, data order and gate draws come
from dedicated numpy generators, and per-frame augmentation seeds mix
(seed, epoch, frame_id).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .checkpoint import (
    Checkpoint,
    load_checkpoint,
    load_module_from_blobs,
    module_to_blobs,
    optimizer_to_blobs,
    torch_rng_blob,
)
from .distill import (
    Adapter,
    DistillConfig,
    filter_pseudo_labels,
    frfd_loss,
    lrfd_loss,
    ssod_loss,
    total_loss,
)
from .errors import ConfigurationError, ContractViolation, ValidationError
from .frames import Box3D, DatasetManifest, PointCloudFrame, Split
from .fusion import dropout_gate
from .head import AnchorGrid, decode_nms, gt_loss, assign_targets
from .metrics import EvalReport, heatmap_contrast, map_eval
from .models import (
    StudentNet,
    TeacherNet,
    build_anchor_grid,
    head_output_for_frame,
)
from .scene import augment_pair
from .voxel import scatter_voxels, voxelize

LogFn = Callable[[str], None]


@dataclass
class OptimizerSpec:
    """Decoupled-weight-decay Adam with a one-cycle learning rate."""

    lr_initial: float = 1e-3
    lr_max: float = 1e-2
    lr_min: float = 1e-7
    weight_decay: float = 1e-2
    warm_frac: float = 0.4

    def validate(self) -> "OptimizerSpec":
        if not (0.0 < self.lr_min <= self.lr_initial <= self.lr_max):
            raise ValidationError(
                "need 0 < lr_min <= lr_initial <= lr_max, got "
                f"({self.lr_min}, {self.lr_initial}, {self.lr_max})"
            )
        if not (0.0 < self.warm_frac < 1.0):
            raise ValidationError("warm_frac must be in (0, 1)")
        if self.weight_decay < 0.0:
            raise ValidationError("weight_decay must be >= 0")
        return self


@dataclass
class TrainConfig:
    teacher_epochs: int = 20
    student_epochs: int = 20
    batch_size: int = 4
    augment: bool = True
    log_every: int = 10

    def validate(self) -> "TrainConfig":
        if self.teacher_epochs < 0 or self.student_epochs < 0:
            raise ValidationError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.log_every < 1:
            raise ValidationError("log_every must be >= 1")
        return self


@dataclass(frozen=True)
class AblationVariant:
    """One supervision recipe for the student."""

    name: str
    supervised: bool  # trained directly on GT, no teacher involved
    use_gt: bool
    use_lrfd: bool
    use_frfd: bool
    max_unlabeled: int | None = None


VARIANTS: dict[str, AblationVariant] = {
    "gt_only": AblationVariant("gt_only", True, True, False, False),
    "ssod": AblationVariant("ssod", False, False, False, False),
    "ssod_gt": AblationVariant("ssod_gt", False, True, False, False),
    "ssod_frfd": AblationVariant("ssod_frfd", False, False, False, True),
    "ssod_lrfd": AblationVariant("ssod_lrfd", False, False, True, False),
    "sckd": AblationVariant("sckd", False, False, True, True),
    "sckd_gt": AblationVariant("sckd_gt", False, True, True, True),
}


@dataclass
class AblationConfig:
    seeds: tuple[int, ...] = (0, 1, 2)
    variants: tuple[str, ...] = ("gt_only", "ssod", "ssod_frfd", "ssod_lrfd", "sckd")

    def validate(self) -> "AblationConfig":
        if not self.seeds:
            raise ValidationError("ablation needs at least one seed")
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise ValidationError(
                f"unknown ablation variants {unknown}; "
                f"known: {sorted(VARIANTS)}"
            )
        return self


def lr_schedule(step: int, total_steps: int, spec: OptimizerSpec) -> float:
    """One-cycle schedule: linear rise from lr_initial to lr_max over the
    warm fraction of steps, then cosine decay to lr_min at the last step."""
    spec.validate()
    if not (0 <= step < total_steps):
        raise ContractViolation(
            f"step {step} outside [0, {total_steps})"
        )
    if total_steps == 1:
        return spec.lr_initial
    if total_steps == 2:
        return spec.lr_initial if step == 0 else spec.lr_min
    warm = min(max(1, round(spec.warm_frac * total_steps)), total_steps - 2)
    if step <= warm:
        return spec.lr_initial + (spec.lr_max - spec.lr_initial) * step / warm
    t = (step - warm) / (total_steps - 1 - warm)
    return spec.lr_min + (spec.lr_max - spec.lr_min) * 0.5 * (1.0 + math.cos(math.pi * t))


# ----------------------------------------------------------------- data


@dataclass
class FramePair:
    lidar: PointCloudFrame
    radar: PointCloudFrame

    @property
    def frame_id(self) -> int:
        return self.lidar.frame_id

    @property
    def labels(self) -> list[Box3D] | None:
        return self.lidar.labels

    def stripped(self) -> "FramePair":
        return FramePair(self.lidar.without_labels(), self.radar.without_labels())


def load_pairs(manifest: DatasetManifest, split: Split) -> list[FramePair]:
    return [FramePair(l, r) for l, r in manifest.load_split(split)]


def _augment_seed(base_seed: int, epoch: int, frame_id: int) -> int:
    return int(
        np.random.SeedSequence([base_seed, 7001, epoch, frame_id]).generate_state(1)[0]
    )


def _derived_seed(base_seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([base_seed, stream]).generate_state(1)[0])


def _batch_tensors(pairs, indices, epoch, seed, augment, lidar_grid, radar_grid,
                   dtype, need_lidar: bool):
    """Augment, voxelize and densify one batch.

    Returns (lidar_dense or None, radar_dense, labels_per_frame) where a
    frame without labels contributes None.
    """
    lidar_arrays, radar_arrays, labels_out = [], [], []
    for i in indices:
        pair = pairs[i]
        labels = pair.labels
        if augment:
            lidar, radar, aug_labels = augment_pair(
                pair.lidar, pair.radar, labels or [],
                _augment_seed(seed, epoch, pair.frame_id),
            )
            labels = aug_labels if labels is not None else None
        else:
            lidar, radar = pair.lidar, pair.radar
        if need_lidar:
            lidar_arrays.append(scatter_voxels(voxelize(lidar, lidar_grid)))
        radar_arrays.append(scatter_voxels(voxelize(radar, radar_grid)))
        labels_out.append(labels)
    lidar_dense = (
        torch.from_numpy(np.stack(lidar_arrays)).to(dtype) if need_lidar else None
    )
    radar_dense = torch.from_numpy(np.stack(radar_arrays)).to(dtype)
    return lidar_dense, radar_dense, labels_out


def _epoch_batches(n_items: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n_items)
    for start in range(0, n_items, batch_size):
        yield order[start : start + batch_size]


def _param_names(module: torch.nn.Module) -> list[str]:
    return [name for name, _ in module.named_parameters()]


def _finish_checkpoint(kind, module, optimizer, epoch, cfg, rng_states) -> Checkpoint:
    from .config import model_hash  # runtime import, config imports this module

    blobs = module_to_blobs(module)
    blobs.update(optimizer_to_blobs(optimizer, _param_names(module)))
    blobs["rng.torch"] = torch_rng_blob()
    return Checkpoint(
        kind=kind,
        epoch=epoch,
        config_hash=model_hash(cfg),
        blobs=blobs,
        meta={"numpy_rng": rng_states},
    )


def _build_teacher(cfg) -> TeacherNet:
    return TeacherNet(
        cfg.grid.lidar_grid(),
        cfg.grid.radar_grid(),
        cfg.encoder,
        cfg.ms2d,
        cfg.anchors,
        p_drop=cfg.fusion.p_drop,
        p_l_drop=cfg.fusion.p_l_drop,
        scalar_weights=cfg.fusion.scalar_weights,
    )


def _build_student(cfg) -> StudentNet:
    return StudentNet(cfg.grid.radar_grid(), cfg.encoder, cfg.ms2d, cfg.anchors)


def _anchor_grid(cfg) -> AnchorGrid:
    return build_anchor_grid(cfg.grid.lidar_grid(), cfg.encoder, cfg.ms2d, cfg.anchors)


def _gt_batch_loss(outputs, labels_per_frame, anchors):
    """Mean (cls + reg) loss over the frames that carry labels."""
    terms = []
    for i, labels in enumerate(labels_per_frame):
        if labels is None:
            continue
        targets = assign_targets(anchors, labels)
        l_cls, l_reg = gt_loss(head_output_for_frame(outputs, i), targets)
        terms.append(l_cls + l_reg)
    if not terms:
        return None
    return sum(terms) / len(terms)


# ------------------------------------------------------------- training


def pretrain_teacher(pairs: list[FramePair], cfg, log: LogFn | None = None) -> Checkpoint:
    """Ground-truth pretraining of the bi-modal teacher, dropout gate on."""
    cfg.train.validate()
    cfg.optim.validate()
    if not pairs:
        raise ConfigurationError("pretrain_teacher: labeled split is empty")
    for pair in pairs:
        if pair.labels is None:
            raise ConfigurationError(
                f"pretrain_teacher: frame {pair.frame_id} has no labels"
            )

    torch.manual_seed(_derived_seed(cfg.seed, 10))
    teacher = _build_teacher(cfg)
    anchors = _anchor_grid(cfg)
    optimizer = torch.optim.AdamW(
        teacher.parameters(), lr=cfg.optim.lr_initial,
        weight_decay=cfg.optim.weight_decay,
    )
    data_rng = np.random.default_rng([cfg.seed, 11])
    gate_rng = np.random.default_rng([cfg.seed, 12])
    lidar_grid, radar_grid = cfg.grid.lidar_grid(), cfg.grid.radar_grid()

    n_batches = math.ceil(len(pairs) / cfg.train.batch_size)
    total_steps = cfg.train.teacher_epochs * n_batches
    step = 0
    teacher.train()
    for epoch in range(cfg.train.teacher_epochs):
        for indices in _epoch_batches(len(pairs), cfg.train.batch_size, data_rng):
            lidar_dense, radar_dense, labels = _batch_tensors(
                pairs, indices, epoch, cfg.seed, cfg.train.augment,
                lidar_grid, radar_grid, torch.float32, need_lidar=True,
            )
            gate = dropout_gate(teacher.af, gate_rng)
            outputs = teacher(lidar_dense, radar_dense, gate)
            loss = _gt_batch_loss(outputs, labels, anchors)
            lr = lr_schedule(step, total_steps, cfg.optim)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            if log and step % cfg.train.log_every == 0:
                log(
                    f"kind=teacher step={step} epoch={epoch} lr={lr:.6f} "
                    f"gt={loss.detach().item():.4f}"
                )
            step += 1
    teacher.eval()
    return _finish_checkpoint(
        "teacher", teacher, optimizer, cfg.train.teacher_epochs, cfg,
        {"data": data_rng.bit_generator.state, "gate": gate_rng.bit_generator.state},
    )


def train_student_supervised(
    pairs: list[FramePair], cfg, log: LogFn | None = None
) -> Checkpoint:
    """Radar-only baseline trained directly on ground truth."""
    cfg.train.validate()
    cfg.optim.validate()
    if not pairs:
        raise ConfigurationError("train_student_supervised: labeled split is empty")

    torch.manual_seed(_derived_seed(cfg.seed, 20))
    student = _build_student(cfg)
    trainables = torch.nn.ModuleDict({"student": student})
    anchors = _anchor_grid(cfg)
    optimizer = torch.optim.AdamW(
        trainables.parameters(), lr=cfg.optim.lr_initial,
        weight_decay=cfg.optim.weight_decay,
    )
    data_rng = np.random.default_rng([cfg.seed, 21])
    lidar_grid, radar_grid = cfg.grid.lidar_grid(), cfg.grid.radar_grid()

    n_batches = math.ceil(len(pairs) / cfg.train.batch_size)
    total_steps = cfg.train.student_epochs * n_batches
    step = 0
    student.train()
    for epoch in range(cfg.train.student_epochs):
        for indices in _epoch_batches(len(pairs), cfg.train.batch_size, data_rng):
            _, radar_dense, labels = _batch_tensors(
                pairs, indices, epoch, cfg.seed, cfg.train.augment,
                lidar_grid, radar_grid, torch.float32, need_lidar=False,
            )
            outputs = student(radar_dense)
            loss = _gt_batch_loss(outputs, labels, anchors)
            if loss is None:
                raise ConfigurationError(
                    "train_student_supervised needs labeled frames"
                )
            lr = lr_schedule(step, total_steps, cfg.optim)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            if log and step % cfg.train.log_every == 0:
                log(
                    f"kind=student-gt step={step} epoch={epoch} lr={lr:.6f} "
                    f"gt={loss.detach().item():.4f}"
                )
            step += 1
    student.eval()
    return _finish_checkpoint(
        "student", trainables, optimizer, cfg.train.student_epochs, cfg,
        {"data": data_rng.bit_generator.state},
    )


def _load_teacher(teacher_ckpt, cfg) -> TeacherNet:
    from .config import model_hash

    if isinstance(teacher_ckpt, TeacherNet):
        teacher_ckpt.eval()
        for param in teacher_ckpt.parameters():
            param.requires_grad_(False)
        return teacher_ckpt
    if isinstance(teacher_ckpt, (str, Path)):
        path = Path(teacher_ckpt)
        if not path.exists():
            raise ConfigurationError(f"teacher checkpoint not found: {path}")
        teacher_ckpt = load_checkpoint(path)
    if teacher_ckpt.kind != "teacher":
        raise ConfigurationError(
            f"expected a teacher checkpoint, got kind '{teacher_ckpt.kind}'"
        )
    if teacher_ckpt.config_hash != model_hash(cfg):
        raise ConfigurationError(
            "teacher checkpoint was built with different model settings "
            f"(hash {teacher_ckpt.config_hash} != {model_hash(cfg)})"
        )
    teacher = _build_teacher(cfg)
    load_module_from_blobs(teacher, teacher_ckpt.blobs)
    teacher.eval()
    for param in teacher.parameters():
        param.requires_grad_(False)
    return teacher


def teacher_pseudo_labels(outputs, index, anchors, distill_cfg: DistillConfig,
                          nms_iou: float) -> list[Box3D]:
    """Decode one frame of teacher output and keep boxes above sigma."""
    candidates = decode_nms(
        head_output_for_frame(outputs, index),
        anchors,
        conf_min=min(0.05, distill_cfg.sigma),
        nms_iou=nms_iou,
    )
    return filter_pseudo_labels(candidates, distill_cfg.sigma)


def distill_student(
    teacher_ckpt,
    labeled_pairs: list[FramePair],
    unlabeled_pairs: list[FramePair],
    cfg,
    log: LogFn | None = None,
) -> Checkpoint:
    """Distill a radar-only student from a frozen teacher.

    Labels on the labeled frames are read only when cfg.distill.use_gt is
    set; otherwise the frames are stripped before they enter the loop, so
    the default path cannot touch ground truth.
    """
    cfg.train.validate()
    cfg.optim.validate()
    dc = cfg.distill.validate()
    if not labeled_pairs and not unlabeled_pairs:
        raise ConfigurationError("distill_student: no training frames given")

    teacher = _load_teacher(teacher_ckpt, cfg)

    if dc.use_gt:
        train_pairs = list(labeled_pairs)
    else:
        train_pairs = [p.stripped() for p in labeled_pairs]
    train_pairs += [p.stripped() for p in unlabeled_pairs]

    torch.manual_seed(_derived_seed(cfg.seed, 20))
    student = _build_student(cfg)
    modules: dict[str, torch.nn.Module] = {"student": student}
    channels = cfg.encoder.bev_channels
    if dc.alpha > 0.0:
        modules["adapter_lidar"] = Adapter(channels, dc.adapter_kernel)
    if dc.beta > 0.0:
        modules["adapter_fusion_lidar"] = Adapter(channels, dc.adapter_kernel)
        modules["adapter_fusion_radar"] = Adapter(channels, dc.adapter_kernel)
    trainables = torch.nn.ModuleDict(modules)

    anchors = _anchor_grid(cfg)
    optimizer = torch.optim.AdamW(
        trainables.parameters(), lr=cfg.optim.lr_initial,
        weight_decay=cfg.optim.weight_decay,
    )
    data_rng = np.random.default_rng([cfg.seed, 21])
    lidar_grid, radar_grid = cfg.grid.lidar_grid(), cfg.grid.radar_grid()

    n_batches = math.ceil(len(train_pairs) / cfg.train.batch_size)
    total_steps = cfg.train.student_epochs * n_batches
    step = 0
    zero = torch.zeros(())
    student.train()
    for epoch in range(cfg.train.student_epochs):
        for indices in _epoch_batches(len(train_pairs), cfg.train.batch_size, data_rng):
            lidar_dense, radar_dense, labels = _batch_tensors(
                train_pairs, indices, epoch, cfg.seed, cfg.train.augment,
                lidar_grid, radar_grid, torch.float32, need_lidar=True,
            )
            with torch.no_grad():
                t_out = teacher(lidar_dense, radar_dense)
            s_out = student(radar_dense)

            l_lrfd = (
                lrfd_loss(s_out["f_radar"], t_out["f_lidar"],
                          trainables["adapter_lidar"])
                if dc.alpha > 0.0
                else zero
            )
            l_frfd = (
                frfd_loss(
                    s_out["f_radar"], t_out["f_fusion"],
                    trainables["adapter_fusion_lidar"],
                    trainables["adapter_fusion_radar"],
                )
                if dc.beta > 0.0
                else zero
            )
            ssod_terms = []
            for i in range(len(indices)):
                pseudo = teacher_pseudo_labels(t_out, i, anchors, dc,
                                               cfg.eval.nms_iou)
                ssod_terms.append(
                    ssod_loss(head_output_for_frame(s_out, i), pseudo, anchors)
                )
            l_ssod = sum(ssod_terms) / len(ssod_terms)

            l_gt = _gt_batch_loss(s_out, labels, anchors) if dc.use_gt else None
            loss = total_loss(l_lrfd, l_frfd, l_ssod, dc, l_gt)

            lr = lr_schedule(step, total_steps, cfg.optim)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            if log and step % cfg.train.log_every == 0:
                gt_part = f" gt={l_gt.detach().item():.4f}" if l_gt is not None else ""
                log(
                    f"kind=student step={step} epoch={epoch} lr={lr:.6f} "
                    f"lrfd={l_lrfd.detach().item():.4f} frfd={l_frfd.detach().item():.4f} "
                    f"ssod={l_ssod.detach().item():.4f}{gt_part} total={loss.detach().item():.4f}"
                )
            step += 1
    student.eval()
    return _finish_checkpoint(
        "student", trainables, optimizer, cfg.train.student_epochs, cfg,
        {"data": data_rng.bit_generator.state},
    )


# ------------------------------------------------------------ evaluation


def build_model_from_checkpoint(ckpt: Checkpoint, cfg):
    from .config import model_hash

    if ckpt.config_hash != model_hash(cfg):
        raise ConfigurationError(
            "checkpoint was built with different model settings "
            f"(hash {ckpt.config_hash} != {model_hash(cfg)})"
        )
    if ckpt.kind == "teacher":
        model = _build_teacher(cfg)
        load_module_from_blobs(model, ckpt.blobs)
    elif ckpt.kind == "student":
        model = _build_student(cfg)
        load_module_from_blobs(model, ckpt.blobs, prefix="model.student.")
    else:
        raise ConfigurationError(f"unknown checkpoint kind '{ckpt.kind}'")
    model.eval()
    return model


@torch.no_grad()
def evaluate_model(model, val_pairs: list[FramePair], cfg) -> EvalReport:
    """Run detection on the validation pairs and score both regions."""
    if not val_pairs:
        raise ConfigurationError("evaluate_model: validation split is empty")
    model.eval()
    anchors = _anchor_grid(cfg)
    lidar_grid, radar_grid = cfg.grid.lidar_grid(), cfg.grid.radar_grid()
    is_teacher = isinstance(model, TeacherNet)
    dets_by_frame, gts_by_frame = {}, {}
    for pair in val_pairs:
        _, radar_dense, _ = _batch_tensors(
            [pair], [0], 0, cfg.seed, False, lidar_grid, radar_grid,
            torch.float32, need_lidar=False,
        )
        if is_teacher:
            lidar_dense, _, _ = _batch_tensors(
                [pair], [0], 0, cfg.seed, False, lidar_grid, radar_grid,
                torch.float32, need_lidar=True,
            )
            outputs = model(lidar_dense, radar_dense)
        else:
            outputs = model(radar_dense)
        dets = decode_nms(
            head_output_for_frame(outputs, 0), anchors,
            cfg.eval.conf_min, cfg.eval.nms_iou,
        )
        dets_by_frame[pair.frame_id] = dets
        gts_by_frame[pair.frame_id] = pair.labels or []
    return map_eval(dets_by_frame, gts_by_frame, cfg.eval)


def evaluate_checkpoint(ckpt: Checkpoint, val_pairs, cfg) -> EvalReport:
    return evaluate_model(build_model_from_checkpoint(ckpt, cfg), val_pairs, cfg)


@torch.no_grad()
def student_heatmap_contrasts(model: StudentNet, val_pairs, cfg) -> list[float]:
    """Foreground/background activation ratio of the student's encoder
    BEV map, one value per frame with valid masks."""
    model.eval()
    radar_grid = cfg.grid.radar_grid()
    out = []
    for pair in val_pairs:
        bev = model.radar_encoder.encode(voxelize(pair.radar, radar_grid))
        ratio = heatmap_contrast(
            bev.data.numpy(), radar_grid, pair.labels or []
        )
        if not math.isnan(ratio):
            out.append(ratio)
    return out


# -------------------------------------------------------------- ablation


@dataclass
class AblationRow:
    variant: str
    reports: list[EvalReport]  # one per seed

    def median_map(self, region: str = "entire") -> float:
        return float(np.median([r.regions[region].map for r in self.reports]))


@dataclass
class AblationTable:
    rows: list[AblationRow]
    seeds: tuple[int, ...]

    def render_kv(self) -> str:
        lines = [f"seeds {','.join(str(s) for s in self.seeds)}"]
        for row in self.rows:
            for region in ("entire", "corridor"):
                for si, report in enumerate(row.reports):
                    lines.append(
                        f"{row.variant}.{region}.seed{self.seeds[si]}.map "
                        f"{report.regions[region].map:.4f}"
                    )
                lines.append(
                    f"{row.variant}.{region}.median_map "
                    f"{row.median_map(region):.4f}"
                )
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        lines = ["variant        entire-mAP  corridor-mAP  (median over seeds "
                 f"{list(self.seeds)})"]
        for row in self.rows:
            lines.append(
                f"{row.variant:<14} {row.median_map('entire'):10.4f}  "
                f"{row.median_map('corridor'):12.4f}"
            )
        return "\n".join(lines) + "\n"


def variant_config(cfg, variant: AblationVariant, seed: int):
    """Specialize the run config for one ablation variant and seed."""
    distill = replace(
        cfg.distill,
        use_gt=variant.use_gt,
        alpha=cfg.distill.alpha if variant.use_lrfd else 0.0,
        beta=cfg.distill.beta if variant.use_frfd else 0.0,
    )
    return replace(cfg, seed=seed, distill=distill)


def run_ablation(
    cfg,
    manifest: DatasetManifest,
    log: LogFn | None = None,
    variants: list[str] | None = None,
    seeds: tuple[int, ...] | None = None,
) -> AblationTable:
    """Train and evaluate every requested variant over every seed.

    Teachers are trained once per seed and shared across the variants
    that need one (the teacher does not depend on the distill section).
    """
    cfg.ablation.validate()
    names = list(variants if variants is not None else cfg.ablation.variants)
    seeds = tuple(seeds if seeds is not None else cfg.ablation.seeds)
    unknown = [n for n in names if n not in VARIANTS]
    if unknown:
        raise ValidationError(f"unknown ablation variants {unknown}")

    labeled = load_pairs(manifest, Split.LABELED_TRAIN)
    unlabeled = load_pairs(manifest, Split.UNLABELED_TRAIN)
    val = load_pairs(manifest, Split.VAL)

    teacher_cache: dict[int, Checkpoint] = {}
    rows = []
    for name in names:
        variant = VARIANTS[name]
        reports = []
        for seed in seeds:
            run_cfg = variant_config(cfg, variant, seed)
            if log:
                log(f"ablation variant={name} seed={seed} start")
            if variant.supervised:
                ckpt = train_student_supervised(labeled, run_cfg, log=log)
            else:
                if seed not in teacher_cache:
                    teacher_cache[seed] = pretrain_teacher(labeled, run_cfg, log=log)
                unl = unlabeled
                if variant.max_unlabeled is not None:
                    unl = unlabeled[: variant.max_unlabeled]
                ckpt = distill_student(
                    teacher_cache[seed], labeled, unl, run_cfg, log=log
                )
            report = evaluate_checkpoint(ckpt, val, run_cfg)
            if log:
                log(
                    f"ablation variant={name} seed={seed} "
                    f"entire_map={report.regions['entire'].map:.4f}"
                )
            reports.append(report)
        rows.append(AblationRow(variant=name, reports=reports))
    return AblationTable(rows=rows, seeds=seeds)
