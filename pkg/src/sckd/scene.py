"""Deterministic synthetic paired Lidar/radar scenes.

A scene is a handful of boxes (cars, pedestrians, cyclists) standing on a
rough ground plane.  The Lidar sweep samples box surfaces and ground with
per-point intensity; the radar sweep is a sparse noisy subsample of the
same surfaces with two extra channels (reflectivity in dB-like units and
radial Doppler velocity) plus multipath ghost points mirrored across one
random vertical reflector plane per scene.

The radar budget is ``floor(density_ratio * n_lidar)`` points in total,
ghosts included, so the radar cloud can never exceed the configured
fraction of the Lidar cloud.  Position noise is Gaussian with its norm
clipped at three sigma, which keeps every non-ghost radar point within
``3 * sigma`` of the Lidar surface sample it was drawn from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .frames import (
    Box3D,
    ClassId,
    DatasetManifest,
    Modality,
    PointCloudFrame,
    Split,
    quantize_box,
    wrap_yaw,
    write_frame,
)

# nominal (l, w, h) per class; per-object sizes jitter around these
NOMINAL_SIZE = {
    ClassId.CAR: (4.0, 1.8, 1.5),
    ClassId.PEDESTRIAN: (0.6, 0.6, 1.7),
    ClassId.CYCLIST: (1.8, 0.6, 1.5),
}
MAX_SPEED = {ClassId.CAR: 8.0, ClassId.PEDESTRIAN: 1.5, ClassId.CYCLIST: 4.0}
RCS_MEAN = {ClassId.CAR: 15.0, ClassId.PEDESTRIAN: 0.0, ClassId.CYCLIST: 5.0}
RCS_STD = 2.0
BACKGROUND_RCS_MEAN = -8.0
BACKGROUND_RCS_STD = 3.0
DOPPLER_NOISE_STD = 0.1


@dataclass
class SceneSpec:
    """Everything that determines one synthetic scene."""

    n_cars: int = 3
    n_pedestrians: int = 1
    n_cyclists: int = 1
    x_range: tuple[float, float] = (0.0, 19.2)
    y_range: tuple[float, float] = (-9.6, 9.6)
    lidar_points_per_object: int = 256
    lidar_background_density: float = 10.0
    radar_density_ratio: float = 0.08
    radar_noise_sigma: float = 0.12
    ghost_rate: float = 0.05
    seed: int = 0

    def validate(self) -> "SceneSpec":
        if min(self.n_cars, self.n_pedestrians, self.n_cyclists) < 0:
            raise ValidationError("object counts must be >= 0")
        if self.x_range[1] <= self.x_range[0] or self.y_range[1] <= self.y_range[0]:
            raise ValidationError("area bounds must be non-empty intervals")
        if self.lidar_points_per_object <= 0:
            raise ValidationError("lidar_points_per_object must be positive")
        if self.lidar_background_density <= 0.0:
            raise ValidationError("lidar_background_density must be positive")
        if not (0.0 < self.radar_density_ratio <= 0.1):
            raise ValidationError(
                f"radar_density_ratio must be in (0, 0.1], got {self.radar_density_ratio}"
            )
        if self.radar_noise_sigma < 0.0:
            raise ValidationError("radar_noise_sigma must be >= 0")
        if not (0.0 <= self.ghost_rate < 1.0):
            raise ValidationError("ghost_rate must be in [0, 1)")
        return self

    def class_counts(self) -> list[tuple[ClassId, int]]:
        return [
            (ClassId.CAR, self.n_cars),
            (ClassId.PEDESTRIAN, self.n_pedestrians),
            (ClassId.CYCLIST, self.n_cyclists),
        ]


def _sample_objects(spec: SceneSpec, rng: np.random.Generator):
    """Place boxes with a crude non-overlap rejection on center distance."""
    boxes: list[Box3D] = []
    velocities: list[np.ndarray] = []
    placed: list[tuple[float, float, float]] = []  # (cx, cy, radius)
    for class_id, count in spec.class_counts():
        nom = NOMINAL_SIZE[class_id]
        for _ in range(count):
            size = tuple(
                float(n * (1.0 + np.clip(rng.normal(0.0, 0.05), -0.15, 0.15)))
                for n in nom
            )
            radius = 0.5 * math.hypot(size[0], size[1])
            margin = radius + 0.3
            lo_x = min(spec.x_range[0] + margin, 0.5 * sum(spec.x_range))
            hi_x = max(spec.x_range[1] - margin, 0.5 * sum(spec.x_range))
            lo_y = min(spec.y_range[0] + margin, 0.5 * sum(spec.y_range))
            hi_y = max(spec.y_range[1] - margin, 0.5 * sum(spec.y_range))
            for _ in range(32):
                cx = rng.uniform(lo_x, hi_x)
                cy = rng.uniform(lo_y, hi_y)
                if all(
                    math.hypot(cx - px, cy - py) > radius + pr + 0.2
                    for px, py, pr in placed
                ):
                    break
            placed.append((cx, cy, radius))
            yaw = wrap_yaw(rng.uniform(-math.pi, math.pi))
            box = quantize_box(
                Box3D(center=(cx, cy, 0.5 * size[2]), size=size, yaw=yaw,
                      class_id=class_id)
            )
            boxes.append(box.validate())
            speed = rng.uniform(0.0, MAX_SPEED[class_id])
            heading = np.array([math.cos(box.yaw), math.sin(box.yaw), 0.0])
            velocities.append(speed * heading)
    return boxes, velocities


def _sample_box_surface(box: Box3D, count: int, rng: np.random.Generator):
    """Uniform samples on the four side faces and the top face."""
    l, w, h = box.size
    areas = np.array([w * h, w * h, l * h, l * h, l * w])
    faces = rng.choice(5, size=count, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=count)
    v = rng.uniform(-0.5, 0.5, size=count)
    local = np.empty((count, 3))
    for i, face in enumerate(faces):
        if face == 0:
            local[i] = (0.5 * l, u[i] * w, v[i] * h)
        elif face == 1:
            local[i] = (-0.5 * l, u[i] * w, v[i] * h)
        elif face == 2:
            local[i] = (u[i] * l, 0.5 * w, v[i] * h)
        elif face == 3:
            local[i] = (u[i] * l, -0.5 * w, v[i] * h)
        else:
            local[i] = (u[i] * l, v[i] * w, 0.5 * h)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    world = np.empty_like(local)
    world[:, 0] = c * local[:, 0] - s * local[:, 1] + box.center[0]
    world[:, 1] = s * local[:, 0] + c * local[:, 1] + box.center[1]
    world[:, 2] = local[:, 2] + box.center[2]
    return world


def generate_scene(spec: SceneSpec, frame_id: int = 0):
    """Build one paired scene.

    Returns ``(lidar_frame, radar_frame, labels)``; both frames carry the
    same frame_id and the same label list, and the whole construction is a
    pure function of the spec (including its seed).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    boxes, velocities = _sample_objects(spec, rng)

    xyz_parts, intensity_parts, source_parts = [], [], []
    for obj_idx, box in enumerate(boxes):
        pts = _sample_box_surface(box, spec.lidar_points_per_object, rng)
        xyz_parts.append(pts)
        intensity_parts.append(
            np.clip(rng.normal(0.7, 0.1, size=len(pts)), 0.0, 1.0)
        )
        source_parts.append(np.full(len(pts), obj_idx, dtype=np.int64))

    area = (spec.x_range[1] - spec.x_range[0]) * (spec.y_range[1] - spec.y_range[0])
    n_bg = int(round(spec.lidar_background_density * area))
    bg = np.empty((n_bg, 3))
    bg[:, 0] = rng.uniform(*spec.x_range, size=n_bg)
    bg[:, 1] = rng.uniform(*spec.y_range, size=n_bg)
    bg[:, 2] = rng.normal(0.0, 0.02, size=n_bg)
    xyz_parts.append(bg)
    intensity_parts.append(np.clip(rng.normal(0.3, 0.1, size=n_bg), 0.0, 1.0))
    source_parts.append(np.full(n_bg, -1, dtype=np.int64))

    lidar_xyz = np.concatenate(xyz_parts) if xyz_parts else np.zeros((0, 3))
    intensity = np.concatenate(intensity_parts) if intensity_parts else np.zeros(0)
    source = np.concatenate(source_parts) if source_parts else np.zeros(0, np.int64)
    lidar_points = np.concatenate(
        [lidar_xyz, intensity[:, None]], axis=1
    ).astype(np.float32)

    n_lidar = len(lidar_points)
    n_radar = int(spec.radar_density_ratio * n_lidar)
    n_ghost = int(spec.ghost_rate * n_radar)
    n_real = n_radar - n_ghost

    rcs_per_object = {
        idx: rng.normal(RCS_MEAN[box.class_id], RCS_STD)
        for idx, box in enumerate(boxes)
    }

    if n_real > 0 and n_lidar > 0:
        pick = rng.choice(n_lidar, size=min(n_real, n_lidar), replace=False)
        base_xyz = lidar_xyz[pick]
        noise = rng.normal(0.0, spec.radar_noise_sigma, size=base_xyz.shape)
        if spec.radar_noise_sigma > 0.0:
            norms = np.linalg.norm(noise, axis=1, keepdims=True)
            cap = 3.0 * spec.radar_noise_sigma
            noise *= np.minimum(1.0, cap / np.maximum(norms, 1e-12))
        real_xyz = base_xyz + noise
        src = source[pick]
        rcs = np.where(
            src >= 0,
            np.array([rcs_per_object.get(s, 0.0) for s in src]),
            rng.normal(BACKGROUND_RCS_MEAN, BACKGROUND_RCS_STD, size=len(pick)),
        )
        vel = np.zeros((len(pick), 3))
        for i, s in enumerate(src):
            if s >= 0:
                vel[i] = velocities[s]
        rays = base_xyz / np.maximum(
            np.linalg.norm(base_xyz, axis=1, keepdims=True), 1e-9
        )
        doppler = (vel * rays).sum(axis=1) + rng.normal(
            0.0, DOPPLER_NOISE_STD, size=len(pick)
        )
        real = np.concatenate(
            [real_xyz, rcs[:, None], doppler[:, None]], axis=1
        )
    else:
        real = np.zeros((0, 5))

    if n_ghost > 0 and len(real) > 0:
        # one vertical reflector plane per scene
        anchor = np.array(
            [rng.uniform(*spec.x_range), rng.uniform(*spec.y_range), 0.0]
        )
        phi = rng.uniform(-math.pi, math.pi)
        normal = np.array([math.cos(phi), math.sin(phi), 0.0])
        pick = rng.choice(len(real), size=n_ghost, replace=len(real) < n_ghost)
        ghosts = real[pick].copy()
        offs = (ghosts[:, :3] - anchor) @ normal
        ghosts[:, :3] -= 2.0 * offs[:, None] * normal
        radar_arr = np.concatenate([real, ghosts])
    else:
        radar_arr = real
    radar_points = radar_arr.astype(np.float32)

    labels = list(boxes)
    lidar = PointCloudFrame(
        frame_id=frame_id, modality=Modality.LIDAR,
        points=lidar_points, labels=labels,
    ).validate()
    radar = PointCloudFrame(
        frame_id=frame_id, modality=Modality.RADAR,
        points=radar_points, labels=labels,
    ).validate()
    return lidar, radar, labels


def frame_seed(base_seed: int, frame_id: int) -> int:
    """Stable per-frame seed derived from (base_seed, frame_id)."""
    return int(np.random.SeedSequence([base_seed, frame_id]).generate_state(1)[0])


def make_dataset(
    n_labeled: int,
    n_unlabeled: int,
    n_val: int,
    spec: SceneSpec,
    out_dir,
) -> DatasetManifest:
    """Generate and serialize a dataset; unlabeled frames are written
    without their boxes so downstream training cannot read them back."""
    if min(n_labeled, n_unlabeled, n_val) < 0:
        raise ValidationError("dataset split counts must be >= 0")
    spec.validate()
    out_dir = Path(out_dir)
    frame_dir = out_dir / "frames"
    frame_dir.mkdir(parents=True, exist_ok=True)

    manifest = DatasetManifest(root=out_dir)
    split_plan = (
        [(Split.LABELED_TRAIN, n_labeled),
         (Split.UNLABELED_TRAIN, n_unlabeled),
         (Split.VAL, n_val)]
    )
    frame_id = 0
    for split, count in split_plan:
        for _ in range(count):
            per_frame = replace(spec, seed=frame_seed(spec.seed, frame_id))
            lidar, radar, _ = generate_scene(per_frame, frame_id=frame_id)
            if split is Split.UNLABELED_TRAIN:
                lidar = lidar.without_labels()
                radar = radar.without_labels()
            for frame, tag in ((lidar, "lidar"), (radar, "radar")):
                rel = f"frames/frame_{frame_id:06d}_{tag}.bin"
                write_frame(frame, out_dir / rel)
                manifest.add(split, rel)
            frame_id += 1
    manifest.save(out_dir / "manifest.txt")
    return manifest


def augment_pair(
    lidar: PointCloudFrame,
    radar: PointCloudFrame,
    labels: list[Box3D],
    seed: int,
):
    """Apply one shared random flip-about-x plus global scale to a pair.

    The flip negates y (and yaw); the scale factor is uniform in
    [0.95, 1.05].  Deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    flip = bool(rng.random() < 0.5)
    scale = float(rng.uniform(0.95, 1.05))
    return apply_pair_transform(lidar, radar, labels, flip, scale)


def apply_pair_transform(
    lidar: PointCloudFrame,
    radar: PointCloudFrame,
    labels: list[Box3D],
    flip: bool,
    scale: float,
):
    """The deterministic core of augment_pair: identical flip/scale on
    both modalities and the boxes.  Computation is in float64 so the
    similarity transform is exact to machine precision regardless of the
    frames' storage dtype."""
    if lidar.frame_id != radar.frame_id:
        raise ValidationError(
            f"augment needs paired frames, got ids "
            f"{lidar.frame_id} and {radar.frame_id}"
        )

    def transform_points(points: np.ndarray) -> np.ndarray:
        out = points.astype(np.float64, copy=True)
        if flip:
            out[:, 1] = -out[:, 1]
        out[:, :3] *= scale
        return out

    def transform_box(box: Box3D) -> Box3D:
        cx, cy, cz = box.center
        yaw = box.yaw
        if flip:
            cy = -cy
            yaw = wrap_yaw(-yaw)
        return Box3D(
            center=(cx * scale, cy * scale, cz * scale),
            size=tuple(s * scale for s in box.size),
            yaw=yaw,
            class_id=box.class_id,
            score=box.score,
        )

    lidar_out = replace(lidar, points=transform_points(lidar.points))
    radar_out = replace(radar, points=transform_points(radar.points))
    labels_out = [transform_box(b) for b in labels]
    lidar_out.labels = labels_out if lidar.labels is not None else None
    radar_out.labels = labels_out if radar.labels is not None else None
    return lidar_out, radar_out, labels_out
