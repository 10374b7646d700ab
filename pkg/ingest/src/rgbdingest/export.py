"""End-to-end export: dataset directory in, observation stream out.

A dataset is a directory with a fixed layout (see the package README):

    calibration.json   pinhole intrinsics, image size, depth scale
    vocabulary.json    closed-set class names with text embeddings
    poses.jsonl        one camera pose per frame, frame ids strictly increasing
    frames/            NNNNNN.color.ppm and NNNNNN.depth.pgm per frame
    model/             NNNNNN.json saved detector and segmenter outputs

For every posed frame the adapter refines the closed-set detections, fuses in
the open-set segments, embeds each fused record, back-projects its mask
through the depth image, and emits the surviving observations as one frame
record. Keyframes (the first frame, then any pose that moved or rotated past
the configured thresholds since the last keyframe) additionally emit a
full-frame cloud for scene-level accumulation. The result is written as a
`.dmos` stream; the whole pass is deterministic for fixed inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import yaml

from .dmos import ExportCloud, ExportFrame, ExportItem, ExportObservation, StreamSpec, write_dmos
from .embed import Vocabulary, embed_record
from .errors import ConfigError, DatasetError
from .pnm import read_pgm16, read_ppm
from .projection import Intrinsics, back_project, camera_to_world
from .records import load_frame_detections
from .refine import fuse, refine_closed_set

PathLike = Union[str, Path]


@dataclass(frozen=True)
class ExportConfig:
    """Tunable thresholds of the export pipeline, loadable from YAML."""

    bbox_merge_iou: float = 0.5
    histogram_similarity: float = 0.7
    histogram_bins: int = 32
    open_drop_iou: float = 0.5
    image_weight: float = 0.7
    text_weight: float = 0.3
    min_points: int = 10
    voxel: float = 0.05
    keyframe_translation: float = 1.0
    keyframe_rotation_deg: float = 20.0
    full_cloud_stride: int = 1

    def __post_init__(self) -> None:
        for name in ("bbox_merge_iou", "histogram_similarity", "open_drop_iou"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.histogram_bins < 1 or self.histogram_bins > 256:
            raise ConfigError(f"histogram_bins must be in [1, 256], got {self.histogram_bins}")
        if self.image_weight < 0 or self.text_weight < 0:
            raise ConfigError("blend weights must be non-negative")
        if self.image_weight + self.text_weight == 0:
            raise ConfigError("blend weights must not both be zero")
        if self.min_points < 1:
            raise ConfigError(f"min_points must be positive, got {self.min_points}")
        if not (self.voxel > 0):
            raise ConfigError(f"voxel must be positive, got {self.voxel}")
        if self.keyframe_translation < 0 or self.keyframe_rotation_deg < 0:
            raise ConfigError("keyframe thresholds must be non-negative")
        if self.full_cloud_stride < 1:
            raise ConfigError(f"full_cloud_stride must be positive, got {self.full_cloud_stride}")

    @classmethod
    def from_yaml(cls, path: PathLike) -> "ExportConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"{path}: unreadable config: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"{path}: unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"{path}: bad config value: {exc}") from exc


@dataclass
class ExportReport:
    """Counters describing one export pass."""

    frames: int = 0
    observations: int = 0
    merged_detections: int = 0
    dropped_open_segments: int = 0
    dropped_small_observations: int = 0
    keyframes: int = 0
    records: int = 0


@dataclass(frozen=True)
class FramePose:
    frame_id: int
    translation: np.ndarray
    rotation: np.ndarray


def load_calibration(path: PathLike) -> Intrinsics:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return Intrinsics(
            fx=float(raw["fx"]),
            fy=float(raw["fy"]),
            cx=float(raw["cx"]),
            cy=float(raw["cy"]),
            width=int(raw["width"]),
            height=int(raw["height"]),
            depth_scale=float(raw["depth_scale"]),
        )
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DatasetError(f"{path}: unreadable calibration: {exc}") from exc


def load_vocabulary(path: PathLike) -> Vocabulary:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        classes = tuple(str(c) for c in raw["classes"])
        dim = int(raw["dim"])
        feats = tuple(np.asarray(f, dtype=np.float64) for f in raw["text_features"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DatasetError(f"{path}: unreadable vocabulary: {exc}") from exc
    return Vocabulary(classes=classes, dim=dim, text_features=feats)


def load_poses(path: PathLike) -> List[FramePose]:
    poses: List[FramePose] = []
    last_id = -1
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"{path}: unreadable poses: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
            frame_id = int(raw["frame_id"])
            translation = np.asarray(raw["translation"], dtype=np.float64).reshape(3)
            rotation = np.asarray(raw["rotation"], dtype=np.float64).reshape(4)
        except (ValueError, KeyError, TypeError) as exc:
            raise DatasetError(f"{path}:{line_no}: bad pose record: {exc}") from exc
        if frame_id <= last_id:
            raise DatasetError(
                f"{path}:{line_no}: frame id {frame_id} not strictly increasing"
            )
        last_id = frame_id
        poses.append(FramePose(frame_id, translation, rotation))
    if not poses:
        raise DatasetError(f"{path}: no poses")
    return poses


def _rotation_delta_deg(q1: np.ndarray, q2: np.ndarray) -> float:
    dot = min(1.0, abs(float(np.dot(q1, q2))))
    return math.degrees(2.0 * math.acos(dot))


def _is_keyframe(
    pose: FramePose, last: Optional[FramePose], config: ExportConfig
) -> bool:
    if last is None:
        return True
    moved = float(np.linalg.norm(pose.translation - last.translation))
    turned = _rotation_delta_deg(pose.rotation, last.rotation)
    return moved > config.keyframe_translation or turned > config.keyframe_rotation_deg


def export_dataset(
    dataset: PathLike, output: PathLike, config: Optional[ExportConfig] = None
) -> ExportReport:
    """Convert one dataset directory into a `.dmos` stream at ``output``."""
    config = config or ExportConfig()
    root = Path(dataset)
    if not root.is_dir():
        raise DatasetError(f"{root}: not a dataset directory")
    intrinsics = load_calibration(root / "calibration.json")
    vocabulary = load_vocabulary(root / "vocabulary.json")
    poses = load_poses(root / "poses.jsonl")
    shape = (intrinsics.height, intrinsics.width)

    report = ExportReport()
    items: List[ExportItem] = []
    last_keyframe: Optional[FramePose] = None
    for pose in poses:
        stem = f"{pose.frame_id:06d}"
        color = read_ppm(root / "frames" / f"{stem}.color.ppm")
        depth = read_pgm16(root / "frames" / f"{stem}.depth.pgm")
        if color.shape[:2] != shape or depth.shape != shape:
            raise DatasetError(f"frame {pose.frame_id}: image size does not match calibration")
        closed, open_set = load_frame_detections(
            root / "model" / f"{stem}.json", shape, vocabulary.dim, vocabulary.classes
        )
        refined = refine_closed_set(
            closed,
            color,
            iou_threshold=config.bbox_merge_iou,
            histogram_threshold=config.histogram_similarity,
            bins=config.histogram_bins,
        )
        fused = fuse(refined, open_set, drop_iou=config.open_drop_iou)
        report.merged_detections += len(closed) - len(refined)
        report.dropped_open_segments += len(open_set) - (len(fused) - len(refined))

        observations: List[ExportObservation] = []
        for record in fused:
            points = camera_to_world(
                back_project(depth, intrinsics, mask=record.mask),
                pose.translation,
                pose.rotation,
            )
            # Depth holes under the mask can starve an observation below the
            # admissible size; the stream format forbids writing those.
            if len(points) < config.min_points:
                report.dropped_small_observations += 1
                continue
            feature = embed_record(
                record, vocabulary, config.image_weight, config.text_weight
            )
            observations.append(ExportObservation(points, feature, record.class_id))
        items.append(
            ExportFrame(
                frame_id=pose.frame_id,
                translation=pose.translation,
                rotation=pose.rotation,
                observations=tuple(observations),
            )
        )
        report.frames += 1
        report.observations += len(observations)

        if _is_keyframe(pose, last_keyframe, config):
            scene_points = camera_to_world(
                back_project(depth, intrinsics, stride=config.full_cloud_stride),
                pose.translation,
                pose.rotation,
            )
            items.append(ExportCloud(frame_id=pose.frame_id, points=scene_points))
            report.keyframes += 1
            last_keyframe = pose

    spec = StreamSpec(
        dim=vocabulary.dim,
        voxel=config.voxel,
        vocabulary=vocabulary.classes,
        min_points=config.min_points,
    )
    report.records = write_dmos(output, items, spec)
    return report
