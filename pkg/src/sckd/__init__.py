"""Radar-only 3D object detection trained by semi-supervised
cross-modality knowledge distillation from a Lidar+radar fusion teacher,
on deterministic synthetic scenes."""

__version__ = "0.1.0"
