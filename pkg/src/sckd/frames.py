"""Point-cloud frames, oriented boxes, frame-file IO and dataset manifests.

Frame file layout (all little-endian):

    magic   8 bytes  b"SCKDFRM1"
    u32     frame_id
    u8      modality        0 = LIDAR, 1 = RADAR
    u8      has_labels      0 or 1
    u32     N               point count
    u32     F               features per point (LIDAR: 4, RADAR: 5)
    f32[N*F]                row-major point payload
    if has_labels:
        u32 B               box count
        B records of 7*f32 (cx, cy, cz, l, w, h, yaw) + u8 class_id

A manifest is line-oriented text, one ``<split> <path>`` per line, with
paths relative to the manifest's directory.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FrameFormatError, ValidationError

FRAME_MAGIC = b"SCKDFRM1"


class Modality(enum.IntEnum):
    LIDAR = 0
    RADAR = 1


class Split(enum.Enum):
    LABELED_TRAIN = "labeled_train"
    UNLABELED_TRAIN = "unlabeled_train"
    VAL = "val"


class ClassId(enum.IntEnum):
    CAR = 0
    PEDESTRIAN = 1
    CYCLIST = 2


FEATURES_PER_MODALITY = {Modality.LIDAR: 4, Modality.RADAR: 5}

TWO_PI = 2.0 * math.pi


def wrap_yaw(yaw: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    return (yaw + math.pi) % TWO_PI - math.pi


@dataclass
class Box3D:
    """Oriented 3D box. ``score`` is set iff the box is a detection."""

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float
    class_id: ClassId
    score: float | None = None

    def validate(self) -> "Box3D":
        if not all(math.isfinite(v) for v in (*self.center, *self.size, self.yaw)):
            raise ValidationError("box has non-finite fields")
        if min(self.size) <= 0.0:
            raise ValidationError(f"box sizes must be positive, got {self.size}")
        if not (-math.pi <= self.yaw < math.pi):
            raise ValidationError(f"yaw {self.yaw} outside [-pi, pi)")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise ValidationError(f"score {self.score} outside [0, 1]")
        return self

    def as_array7(self) -> np.ndarray:
        return np.array([*self.center, *self.size, self.yaw], dtype=np.float64)

    def bev5(self) -> np.ndarray:
        return np.array(
            [self.center[0], self.center[1], self.size[0], self.size[1], self.yaw],
            dtype=np.float64,
        )


# A detection is a Box3D whose score is present.
Detection = Box3D


def boxes_to_array(boxes: list[Box3D]) -> np.ndarray:
    """(B, 7) float64 array of box geometry."""
    if not boxes:
        return np.zeros((0, 7), dtype=np.float64)
    return np.stack([b.as_array7() for b in boxes])


@dataclass
class PointCloudFrame:
    """One sensor sweep: points plus optional ground-truth boxes.

    ``split`` is carried by the manifest, not the frame file; frames read
    straight from disk have ``split=None`` until a dataset assigns it.
    """

    frame_id: int
    modality: Modality
    points: np.ndarray
    labels: list[Box3D] | None = None
    split: Split | None = None

    def validate(self) -> "PointCloudFrame":
        want_f = FEATURES_PER_MODALITY[self.modality]
        if self.points.ndim != 2 or self.points.shape[1] != want_f:
            raise ValidationError(
                f"{self.modality.name} frame needs (N, {want_f}) points, "
                f"got {self.points.shape}"
            )
        if self.points.size and not np.isfinite(self.points).all():
            raise ValidationError("frame contains non-finite point values")
        if self.labels is not None:
            for box in self.labels:
                box.validate()
        return self

    def without_labels(self) -> "PointCloudFrame":
        return replace(self, labels=None)


def _f32(value: float) -> float:
    return float(np.float32(value))


def quantize_box(box: Box3D) -> Box3D:
    """Round box fields to float32 so disk round-trips are lossless."""
    return Box3D(
        center=tuple(_f32(v) for v in box.center),
        size=tuple(_f32(v) for v in box.size),
        yaw=_f32(box.yaw),
        class_id=box.class_id,
        score=box.score,
    )


def write_frame(frame: PointCloudFrame, path) -> None:
    frame.validate()
    points = np.ascontiguousarray(frame.points, dtype="<f4")
    n, f = points.shape
    blob = bytearray()
    blob += FRAME_MAGIC
    blob += struct.pack("<IBBII", frame.frame_id, int(frame.modality),
                        1 if frame.labels is not None else 0, n, f)
    blob += points.tobytes()
    if frame.labels is not None:
        blob += struct.pack("<I", len(frame.labels))
        for box in frame.labels:
            blob += struct.pack("<7f", *box.center, *box.size, box.yaw)
            blob += struct.pack("<B", int(box.class_id))
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, nbytes: int, fieldname: str) -> bytes:
        if self.off + nbytes > len(self.data):
            raise FrameFormatError(
                f"{self.path}: truncated at byte {self.off} while reading "
                f"field '{fieldname}' (need {nbytes} bytes, "
                f"have {len(self.data) - self.off})"
            )
        out = self.data[self.off : self.off + nbytes]
        self.off += nbytes
        return out

    def unpack(self, fmt: str, fieldname: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), fieldname))


def read_frame(path) -> PointCloudFrame:
    data = Path(path).read_bytes()
    r = _Reader(data, path)
    magic = r.take(len(FRAME_MAGIC), "magic")
    if magic != FRAME_MAGIC:
         raise FrameFormatError(
            f"{path}: bad magic at byte 0: expected {FRAME_MAGIC!r}, got {magic!r}"
        )
    frame_id, modality_raw, has_labels, n, f = r.unpack("<IBBII", "header")
    try:
        modality = Modality(modality_raw)
    except ValueError:
        raise FrameFormatError(
            f"{path}: unknown modality {modality_raw} in field 'modality' at byte 12"
        ) from None
    if has_labels not in (0, 1):
        raise FrameFormatError(
            f"{path}: field 'has_labels' at byte 13 must be 0 or 1, got {has_labels}"
        )
    want_f = FEATURES_PER_MODALITY[modality]
    if f != want_f:
        raise FrameFormatError(
            f"{path}: field 'F' at byte 18 is {f} but modality "
            f"{modality.name} requires {want_f}"
        )
    payload = r.take(4 * n * f, "points")
    points = np.frombuffer(payload, dtype="<f4").reshape(n, f).copy()
    labels = None
    if has_labels:
        labels = []
        (b,) = r.unpack("<I", "label_count")
        for i in range(b):
            vals = r.unpack("<7f", f"box[{i}]")
            (class_raw,) = r.unpack("<B", f"box[{i}].class_id")
            try:
                class_id = ClassId(class_raw)
            except ValueError:
                raise FrameFormatError(
                    f"{path}: unknown class_id {class_raw} in field "
                    f"'box[{i}].class_id' at byte {r.off - 1}"
                ) from None
            labels.append(
                Box3D(center=tuple(vals[:3]), size=tuple(vals[3:6]),
                      yaw=vals[6], class_id=class_id)
            )
    if r.off != len(data):
        raise FrameFormatError(
            f"{path}: {len(data) - r.off} trailing bytes at byte {r.off} "
            f"after field 'labels'"
        )
    return PointCloudFrame(
        frame_id=frame_id, modality=modality, points=points, labels=labels
    ).validate()


@dataclass
class ManifestEntry:
    split: Split
    relpath: str


@dataclass
class DatasetManifest:
    """Split-tagged list of frame files, rooted at the manifest directory."""

    root: Path
    entries: list[ManifestEntry] = field(default_factory=list)

    def add(self, split: Split, relpath: str) -> None:
        self.entries.append(ManifestEntry(split, relpath))

    def paths(self, split: Split) -> list[Path]:
        return [self.root / e.relpath for e in self.entries if e.split == split]

    def frame_pairs(self, split: Split):
        """Group a split's files into (lidar_path, radar_path) pairs.

        Relies on the ``*_lidar.bin`` / ``*_radar.bin`` naming produced by
        the synthesizer; files are paired by their common stem.
        """
        by_stem: dict[str, dict[str, Path]] = {}
        for p in self.paths(split):
            stem = p.name
            for suffix in ("_lidar.bin", "_radar.bin"):
                if stem.endswith(suffix):
                    key = stem[: -len(suffix)]
                    by_stem.setdefault(key, {})[suffix] = p
        pairs = []
        for key in sorted(by_stem):
            group = by_stem[key]
            if set(group) != {"_lidar.bin", "_radar.bin"}:
                raise FrameFormatError(
                    f"manifest split {split.value}: frame '{key}' is missing "
                    f"one of its lidar/radar files"
                )
            pairs.append((group["_lidar.bin"], group["_radar.bin"]))
        return pairs

    def load_split(self, split: Split) -> list[tuple[PointCloudFrame, PointCloudFrame]]:
        out = []
        for lidar_path, radar_path in self.frame_pairs(split):
            lidar = read_frame(lidar_path)
            radar = read_frame(radar_path)
            lidar.split = radar.split = split
            if lidar.frame_id != radar.frame_id:
                raise FrameFormatError(
                    f"paired files {lidar_path} / {radar_path} disagree on "
                    f"frame_id ({lidar.frame_id} vs {radar.frame_id})"
                )
            out.append((lidar, radar))
        return out

    def save(self, path) -> None:
        lines = [f"{e.split.value} {e.relpath}" for e in self.entries]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        manifest = cls(root=path.parent)
        for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(maxsplit=1)
            if len(parts) != 2:
                raise FrameFormatError(
                    f"{path}:{lineno}: expected '<split> <path>', got {raw!r}"
                )
            try:
                split = Split(parts[0])
            except ValueError:
                raise FrameFormatError(
                    f"{path}:{lineno}: unknown split tag {parts[0]!r}"
                ) from None
            manifest.add(split, parts[1])
        return manifest
