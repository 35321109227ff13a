import math
import struct

import numpy as np
import pytest

from sckd.errors import FrameFormatError, ValidationError
from sckd.frames import (
    Box3D,
    ClassId,
    DatasetManifest,
    Modality,
    PointCloudFrame,
    Split,
    read_frame,
    wrap_yaw,
    write_frame,
)


def make_frame(n=5, modality=Modality.LIDAR, labels=True, frame_id=3):
    rng = np.random.default_rng(0)
    f = 4 if modality is Modality.LIDAR else 5
    points = rng.normal(size=(n, f)).astype(np.float32)
    boxes = None
    if labels:
        boxes = [
            Box3D(center=(1.0, 2.0, 0.5), size=(4.0, 2.0, 1.5), yaw=0.25,
                  class_id=ClassId.CAR),
            Box3D(center=(-1.0, 0.5, 0.75), size=(0.5, 0.5, 1.5), yaw=-1.0,
                  class_id=ClassId.PEDESTRIAN),
        ]
    return PointCloudFrame(frame_id=frame_id, modality=modality,
                           points=points, labels=boxes)


def assert_frames_equal(a, b):
    assert a.frame_id == b.frame_id
    assert a.modality == b.modality
    assert np.array_equal(a.points, b.points)
    if a.labels is None:
        assert b.labels is None
    else:
        assert b.labels is not None and len(a.labels) == len(b.labels)
        for x, y in zip(a.labels, b.labels):
            assert x == y


def test_roundtrip_lidar(tmp_path):
    frame = make_frame()
    path = tmp_path / "f.bin"
    write_frame(frame, path)
    assert_frames_equal(frame, read_frame(path))


def test_roundtrip_radar_unlabeled(tmp_path):
    frame = make_frame(n=12, modality=Modality.RADAR, labels=False)
    path = tmp_path / "f.bin"
    write_frame(frame, path)
    assert_frames_equal(frame, read_frame(path))


def test_roundtrip_empty_frame(tmp_path):
    frame = make_frame(n=0, labels=True)
    path = tmp_path / "f.bin"
    write_frame(frame, path)
    back = read_frame(path)
    assert back.points.shape == (0, 4)
    assert len(back.labels) == 2


def test_bad_magic(tmp_path):
    path = tmp_path / "f.bin"
    path.write_bytes(b"NOTAFRM1" + b"\x00" * 20)
    with pytest.raises(FrameFormatError, match="byte 0"):
        read_frame(path)


def test_modality_feature_mismatch(tmp_path):
    # a valid 4-feature file whose modality byte is flipped to RADAR
    path = tmp_path / "f.bin"
    write_frame(make_frame(labels=False), path)
    raw = bytearray(path.read_bytes())
    raw[12] = int(Modality.RADAR)
    path.write_bytes(bytes(raw))
    with pytest.raises(FrameFormatError, match="'F'.*RADAR|RADAR.*'F'"):
        read_frame(path)


def test_truncated_points(tmp_path):
    path = tmp_path / "f.bin"
    write_frame(make_frame(labels=False), path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 6])
    with pytest.raises(FrameFormatError, match="truncated.*'points'"):
        read_frame(path)


def test_trailing_garbage(tmp_path):
    path = tmp_path / "f.bin"
    write_frame(make_frame(labels=False), path)
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(FrameFormatError, match="trailing"):
        read_frame(path)


def test_unknown_class_id(tmp_path):
    path = tmp_path / "f.bin"
    write_frame(make_frame(n=1), path)
    raw = bytearray(path.read_bytes())
    raw[-1] = 9  # class byte of the last box record
    path.write_bytes(bytes(raw))
    with pytest.raises(FrameFormatError, match="class_id"):
        read_frame(path)


def test_unknown_modality(tmp_path):
    path = tmp_path / "f.bin"
    write_frame(make_frame(labels=False), path)
    raw = bytearray(path.read_bytes())
    raw[12] = 7
    path.write_bytes(bytes(raw))
    with pytest.raises(FrameFormatError, match="modality"):
        read_frame(path)


def test_box_validation():
    with pytest.raises(ValidationError):
        Box3D(center=(0, 0, 0), size=(0.0, 1.0, 1.0), yaw=0.0,
              class_id=ClassId.CAR).validate()
    with pytest.raises(ValidationError):
        Box3D(center=(0, 0, 0), size=(1.0, 1.0, 1.0), yaw=math.pi,
              class_id=ClassId.CAR).validate()
    with pytest.raises(ValidationError):
        Box3D(center=(0, 0, 0), size=(1.0, 1.0, 1.0), yaw=0.0,
              class_id=ClassId.CAR, score=1.5).validate()


def test_frame_feature_count_validation():
    points = np.zeros((3, 5), dtype=np.float32)
    with pytest.raises(ValidationError):
        PointCloudFrame(0, Modality.LIDAR, points).validate()


def test_wrap_yaw():
    assert wrap_yaw(math.pi) == pytest.approx(-math.pi)
    assert wrap_yaw(-math.pi) == pytest.approx(-math.pi)
    assert wrap_yaw(0.3) == pytest.approx(0.3)
    assert wrap_yaw(2 * math.pi + 0.3) == pytest.approx(0.3)


def test_manifest_roundtrip(tmp_path):
    manifest = DatasetManifest(root=tmp_path)
    manifest.add(Split.LABELED_TRAIN, "frames/frame_000000_lidar.bin")
    manifest.add(Split.LABELED_TRAIN, "frames/frame_000000_radar.bin")
    manifest.add(Split.VAL, "frames/frame_000001_lidar.bin")
    manifest.add(Split.VAL, "frames/frame_000001_radar.bin")
    manifest.save(tmp_path / "manifest.txt")
    back = DatasetManifest.load(tmp_path / "manifest.txt")
    assert [(e.split, e.relpath) for e in back.entries] == [
        (e.split, e.relpath) for e in manifest.entries
    ]
    assert len(back.frame_pairs(Split.VAL)) == 1


def test_manifest_bad_split(tmp_path):
    path = tmp_path / "manifest.txt"
    path.write_text("bogus frames/f.bin\n")
    with pytest.raises(FrameFormatError, match="split"):
        DatasetManifest.load(path)


def test_manifest_missing_pair_member(tmp_path):
    manifest = DatasetManifest(root=tmp_path)
    manifest.add(Split.VAL, "frames/frame_000001_lidar.bin")
    with pytest.raises(FrameFormatError, match="missing"):
        manifest.frame_pairs(Split.VAL)
