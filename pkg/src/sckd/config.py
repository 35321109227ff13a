"""Aggregated run configuration: YAML load/save with strict key checking.

The file mirrors RunConfig's nested sections one-to-one; unknown keys are
rejected with their full path so typos cannot silently fall back to
defaults.  ``parse -> serialize -> parse`` is the identity.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from .distill import DistillConfig
from .errors import ValidationError
from .frames import ClassId
from .head import AnchorConfig, ClassAnchor
from .metrics import APMode, EvalConfig, IoUKind
from .networks import EncoderParams, Ms2dParams
from .scene import SceneSpec
from .train import AblationConfig, OptimizerSpec, TrainConfig
from .voxel import VoxelGridSpec


@dataclass
class DatasetCounts:
    n_labeled: int = 200
    n_unlabeled: int = 0
    n_val: int = 50

    def validate(self) -> "DatasetCounts":
        if min(self.n_labeled, self.n_unlabeled, self.n_val) < 0:
            raise ValidationError("dataset counts must be >= 0")
        return self


@dataclass
class GridConfig:
    range_min: tuple[float, float, float] = (0.0, -9.6, -1.0)
    range_max: tuple[float, float, float] = (19.2, 9.6, 3.0)
    voxel_size: tuple[float, float, float] = (0.3, 0.3, 1.0)
    max_points_lidar: int = 5
    max_points_radar: int = 10

    def lidar_grid(self) -> VoxelGridSpec:
        return VoxelGridSpec(
            self.range_min, self.range_max, self.voxel_size,
            self.max_points_lidar,
        ).validate()

    def radar_grid(self) -> VoxelGridSpec:
        return VoxelGridSpec(
            self.range_min, self.range_max, self.voxel_size,
            self.max_points_radar,
        ).validate()

    def validate(self) -> "GridConfig":
        self.lidar_grid()
        self.radar_grid()
        return self


@dataclass
class FusionConfig:
    p_drop: float = 0.2
    p_l_drop: float = 0.2
    scalar_weights: bool = False

    def validate(self) -> "FusionConfig":
        if not (0.0 <= self.p_drop <= 1.0 and 0.0 <= self.p_l_drop <= 1.0):
            raise ValidationError("fusion probabilities must be in [0, 1]")
        return self


@dataclass
class RunConfig:
    seed: int = 0
    scene: SceneSpec = field(default_factory=SceneSpec)
    dataset: DatasetCounts = field(default_factory=DatasetCounts)
    grid: GridConfig = field(default_factory=GridConfig)
    encoder: EncoderParams = field(default_factory=EncoderParams)
    ms2d: Ms2dParams = field(default_factory=Ms2dParams)
    anchors: AnchorConfig = field(default_factory=AnchorConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    optim: OptimizerSpec = field(default_factory=OptimizerSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def scene_spec(self) -> SceneSpec:
        """Scene spec with the run seed wired in."""
        return replace(self.scene, seed=self.seed)

    def validate(self) -> "RunConfig":
        self.scene.validate()
        self.dataset.validate()
        self.grid.validate()
        self.encoder.validate()
        self.ms2d.validate()
        self.anchors.validate()
        self.fusion.validate()
        self.distill.validate()
        self.optim.validate()
        self.train.validate()
        self.eval.validate()
        self.ablation.validate()
        return self


# ---------------------------------------------------------------- parsing


class _Section:
    """Mapping view that tracks consumption and rejects leftovers."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ValidationError(f"config section '{path}' must be a mapping")
        self.data = dict(data)
        self.path = path

    def take(self, key: str, default):
        return self.data.pop(key, default)

    def child(self, key: str, default=None) -> "_Section":
        raw = self.data.pop(key, None)
        if raw is None:
            raw = default if default is not None else {}
        return _Section(raw, f"{self.path}.{key}" if self.path else key)

    def finish(self) -> None:
        if self.data:
            keys = ", ".join(
                f"{self.path}.{k}" if self.path else k for k in sorted(self.data)
            )
            raise ValidationError(f"unknown config keys: {keys}")


def _triple(value, path: str) -> tuple[float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ValidationError(f"'{path}' must be a 3-element list")
    return tuple(float(v) for v in value)


def _pair(value, path: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ValidationError(f"'{path}' must be a 2-element list")
    return tuple(float(v) for v in value)


def _parse_scene(sec: _Section) -> SceneSpec:
    default = SceneSpec()
    spec = SceneSpec(
        n_cars=int(sec.take("n_cars", default.n_cars)),
        n_pedestrians=int(sec.take("n_pedestrians", default.n_pedestrians)),
        n_cyclists=int(sec.take("n_cyclists", default.n_cyclists)),
        x_range=_pair(sec.take("x_range", list(default.x_range)), "scene.x_range"),
        y_range=_pair(sec.take("y_range", list(default.y_range)), "scene.y_range"),
        lidar_points_per_object=int(
            sec.take("lidar_points_per_object", default.lidar_points_per_object)
        ),
        lidar_background_density=float(
            sec.take("lidar_background_density", default.lidar_background_density)
        ),
        radar_density_ratio=float(
            sec.take("radar_density_ratio", default.radar_density_ratio)
        ),
        radar_noise_sigma=float(
            sec.take("radar_noise_sigma", default.radar_noise_sigma)
        ),
        ghost_rate=float(sec.take("ghost_rate", default.ghost_rate)),
    )
    sec.finish()
    return spec


def _parse_anchors(sec: _Section) -> AnchorConfig:
    default = AnchorConfig()
    yaws = tuple(float(v) for v in sec.take("yaws", list(default.yaws)))
    classes_raw = sec.take("classes", None)
    sec.finish()
    if classes_raw is None:
        return AnchorConfig(yaws=yaws)
    per_class: dict[ClassId, ClassAnchor] = {}
    for name, body in classes_raw.items():
        try:
            class_id = ClassId[name.upper()]
        except KeyError:
            raise ValidationError(f"unknown class 'anchors.classes.{name}'") from None
        child = _Section(body, f"anchors.classes.{name}")
        per_class[class_id] = ClassAnchor(
            size=_triple(child.take("size", None), f"anchors.classes.{name}.size"),
            z_center=float(child.take("z_center", 0.0)),
            pos_iou=float(child.take("pos_iou", 0.5)),
            neg_iou=float(child.take("neg_iou", 0.25)),
        )
        child.finish()
    return AnchorConfig(per_class=per_class, yaws=yaws)


def _parse_eval(sec: _Section) -> EvalConfig:
    default = EvalConfig()
    mode_raw = sec.take("mode", default.mode.value)
    kind_raw = sec.take("iou_kind", default.iou_kind.value)
    try:
        mode = APMode(mode_raw)
    except ValueError:
        raise ValidationError(f"eval.mode must be AP11 or AP40, got {mode_raw!r}") from None
    try:
        kind = IoUKind(kind_raw)
    except ValueError:
        raise ValidationError(f"eval.iou_kind must be BEV or 3D, got {kind_raw!r}") from None
    thr_raw = sec.take(
        "iou_thresholds",
        {c.name.lower(): t for c, t in default.iou_thresholds.items()},
    )
    thresholds = {}
    for name, value in thr_raw.items():
        try:
            thresholds[ClassId[name.upper()]] = float(value)
        except KeyError:
            raise ValidationError(
                f"unknown class 'eval.iou_thresholds.{name}'"
            ) from None
    corridor_raw = sec.take("corridor", list(default.corridor))
    if not isinstance(corridor_raw, (list, tuple)) or len(corridor_raw) != 4:
        raise ValidationError("'eval.corridor' must be [x_min, x_max, y_min, y_max]")
    cfg = EvalConfig(
        mode=mode,
        iou_kind=kind,
        iou_thresholds=thresholds,
        corridor=tuple(float(v) for v in corridor_raw),
        conf_min=float(sec.take("conf_min", default.conf_min)),
        nms_iou=float(sec.take("nms_iou", default.nms_iou)),
    )
    sec.finish()
    return cfg


def from_dict(data: dict) -> RunConfig:
    root = _Section(data or {}, "")
    seed = int(root.take("seed", 0))

    scene = _parse_scene(root.child("scene"))

    d = root.child("dataset")
    dflt = DatasetCounts()
    dataset = DatasetCounts(
        n_labeled=int(d.take("n_labeled", dflt.n_labeled)),
        n_unlabeled=int(d.take("n_unlabeled", dflt.n_unlabeled)),
        n_val=int(d.take("n_val", dflt.n_val)),
    )
    d.finish()

    g = root.child("grid")
    gdflt = GridConfig()
    grid = GridConfig(
        range_min=_triple(g.take("range_min", list(gdflt.range_min)), "grid.range_min"),
        range_max=_triple(g.take("range_max", list(gdflt.range_max)), "grid.range_max"),
        voxel_size=_triple(g.take("voxel_size", list(gdflt.voxel_size)), "grid.voxel_size"),
        max_points_lidar=int(g.take("max_points_lidar", gdflt.max_points_lidar)),
        max_points_radar=int(g.take("max_points_radar", gdflt.max_points_radar)),
    )
    g.finish()

    e = root.child("encoder")
    edflt = EncoderParams()
    strides_raw = e.take("strides", [list(s) for s in edflt.strides])
    encoder = EncoderParams(
        channels=tuple(int(c) for c in e.take("channels", list(edflt.channels))),
        kernels=tuple(int(k) for k in e.take("kernels", list(edflt.kernels))),
        strides=tuple(
            tuple(int(v) for v in _triple(s, "encoder.strides[i]"))
            for s in strides_raw
        ),
        bev_channels=int(e.take("bev_channels", edflt.bev_channels)),
    )
    e.finish()

    m = root.child("ms2d")
    mdflt = Ms2dParams()
    ms2d = Ms2dParams(
        hidden=int(m.take("hidden", mdflt.hidden)),
        out_channels=int(m.take("out_channels", mdflt.out_channels)),
        stride=int(m.take("stride", mdflt.stride)),
        bias=bool(m.take("bias", mdflt.bias)),
    )
    m.finish()

    anchors = _parse_anchors(root.child("anchors"))

    f = root.child("fusion")
    fdflt = FusionConfig()
    fusion = FusionConfig(
        p_drop=float(f.take("p_drop", fdflt.p_drop)),
        p_l_drop=float(f.take("p_l_drop", fdflt.p_l_drop)),
        scalar_weights=bool(f.take("scalar_weights", fdflt.scalar_weights)),
    )
    f.finish()

    di = root.child("distill")
    didflt = DistillConfig()
    distill = DistillConfig(
        sigma=float(di.take("sigma", didflt.sigma)),
        alpha=float(di.take("alpha", didflt.alpha)),
        beta=float(di.take("beta", didflt.beta)),
        use_gt=bool(di.take("use_gt", didflt.use_gt)),
        adapter_kernel=int(di.take("adapter_kernel", didflt.adapter_kernel)),
    )
    di.finish()

    o = root.child("optim")
    odflt = OptimizerSpec()
    optim = OptimizerSpec(
        lr_initial=float(o.take("lr_initial", odflt.lr_initial)),
        lr_max=float(o.take("lr_max", odflt.lr_max)),
        lr_min=float(o.take("lr_min", odflt.lr_min)),
        weight_decay=float(o.take("weight_decay", odflt.weight_decay)),
        warm_frac=float(o.take("warm_frac", odflt.warm_frac)),
    )
    o.finish()

    t = root.child("train")
    tdflt = TrainConfig()
    train = TrainConfig(
        teacher_epochs=int(t.take("teacher_epochs", tdflt.teacher_epochs)),
        student_epochs=int(t.take("student_epochs", tdflt.student_epochs)),
        batch_size=int(t.take("batch_size", tdflt.batch_size)),
        augment=bool(t.take("augment", tdflt.augment)),
        log_every=int(t.take("log_every", tdflt.log_every)),
    )
    t.finish()

    eval_cfg = _parse_eval(root.child("eval"))

    a = root.child("ablation")
    adflt = AblationConfig()
    ablation = AblationConfig(
        seeds=tuple(int(s) for s in a.take("seeds", list(adflt.seeds))),
        variants=tuple(str(v) for v in a.take("variants", list(adflt.variants))),
    )
    a.finish()

    root.finish()
    return RunConfig(
        seed=seed, scene=scene, dataset=dataset, grid=grid, encoder=encoder,
        ms2d=ms2d, anchors=anchors, fusion=fusion, distill=distill,
        optim=optim, train=train, eval=eval_cfg, ablation=ablation,
    ).validate()


def to_dict(cfg: RunConfig) -> dict:
    return {
        "seed": cfg.seed,
        "scene": {
            "n_cars": cfg.scene.n_cars,
            "n_pedestrians": cfg.scene.n_pedestrians,
            "n_cyclists": cfg.scene.n_cyclists,
            "x_range": list(cfg.scene.x_range),
            "y_range": list(cfg.scene.y_range),
            "lidar_points_per_object": cfg.scene.lidar_points_per_object,
            "lidar_background_density": cfg.scene.lidar_background_density,
            "radar_density_ratio": cfg.scene.radar_density_ratio,
            "radar_noise_sigma": cfg.scene.radar_noise_sigma,
            "ghost_rate": cfg.scene.ghost_rate,
        },
        "dataset": {
            "n_labeled": cfg.dataset.n_labeled,
            "n_unlabeled": cfg.dataset.n_unlabeled,
            "n_val": cfg.dataset.n_val,
        },
        "grid": {
            "range_min": list(cfg.grid.range_min),
            "range_max": list(cfg.grid.range_max),
            "voxel_size": list(cfg.grid.voxel_size),
            "max_points_lidar": cfg.grid.max_points_lidar,
            "max_points_radar": cfg.grid.max_points_radar,
        },
        "encoder": {
            "channels": list(cfg.encoder.channels),
            "kernels": list(cfg.encoder.kernels),
            "strides": [list(s) for s in cfg.encoder.strides],
            "bev_channels": cfg.encoder.bev_channels,
        },
        "ms2d": {
            "hidden": cfg.ms2d.hidden,
            "out_channels": cfg.ms2d.out_channels,
            "stride": cfg.ms2d.stride,
            "bias": cfg.ms2d.bias,
        },
        "anchors": {
            "yaws": list(cfg.anchors.yaws),
            "classes": {
                class_id.name.lower(): {
                    "size": list(anchor.size),
                    "z_center": anchor.z_center,
                    "pos_iou": anchor.pos_iou,
                    "neg_iou": anchor.neg_iou,
                }
                for class_id, anchor in sorted(
                    cfg.anchors.per_class.items(), key=lambda kv: int(kv[0])
                )
            },
        },
        "fusion": {
            "p_drop": cfg.fusion.p_drop,
            "p_l_drop": cfg.fusion.p_l_drop,
            "scalar_weights": cfg.fusion.scalar_weights,
        },
        "distill": {
            "sigma": cfg.distill.sigma,
            "alpha": cfg.distill.alpha,
            "beta": cfg.distill.beta,
            "use_gt": cfg.distill.use_gt,
            "adapter_kernel": cfg.distill.adapter_kernel,
        },
        "optim": {
            "lr_initial": cfg.optim.lr_initial,
            "lr_max": cfg.optim.lr_max,
            "lr_min": cfg.optim.lr_min,
            "weight_decay": cfg.optim.weight_decay,
            "warm_frac": cfg.optim.warm_frac,
        },
        "train": {
            "teacher_epochs": cfg.train.teacher_epochs,
            "student_epochs": cfg.train.student_epochs,
            "batch_size": cfg.train.batch_size,
            "augment": cfg.train.augment,
            "log_every": cfg.train.log_every,
        },
        "eval": {
            "mode": cfg.eval.mode.value,
            "iou_kind": cfg.eval.iou_kind.value,
            "iou_thresholds": {
                c.name.lower(): t
                for c, t in sorted(cfg.eval.iou_thresholds.items(),
                                   key=lambda kv: int(kv[0]))
            },
            "corridor": list(cfg.eval.corridor),
            "conf_min": cfg.eval.conf_min,
            "nms_iou": cfg.eval.nms_iou,
        },
        "ablation": {
            "seeds": list(cfg.ablation.seeds),
            "variants": list(cfg.ablation.variants),
        },
    }


def load_config(path) -> RunConfig:
    raw = yaml.safe_load(Path(path).read_text())
    if raw is None:
        raw = {}
    return from_dict(raw)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=True)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]


def model_hash(cfg: RunConfig) -> str:
    """Hash of only the sections that fix network shapes, so checkpoints
    stay valid when training-only settings change."""
    d = to_dict(cfg)
    sub = {k: d[k] for k in ("grid", "encoder", "ms2d", "anchors", "fusion")}
    return hashlib.sha256(
        yaml.safe_dump(sub, sort_keys=True).encode()
    ).hexdigest()[:16]
