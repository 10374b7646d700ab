"""Observation-stream writer implementing the documented `.dmos` layout.

This is an independent implementation of the format described in
``docs/formats.md`` at the repository root; the mapping core's reader is the
reference consumer. Layout, validity rules, and byte order follow that
document exactly, so streams written here are byte-compatible with streams
written by the core and pass its reader with zero rejections.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DatasetError

PathLike = Union[str, Path]

MAGIC = b"DMOS"
VERSION = 1
FRAME_RECORD = 1
CLOUD_RECORD = 2


@dataclass(frozen=True)
class StreamSpec:
    """Header fields of an observation stream."""

    dim: int
    voxel: float = 0.05
    vocabulary: Tuple[str, ...] = ()
    min_points: int = 10

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise DatasetError("stream dim must be positive")
        if self.min_points < 1:
            raise DatasetError("stream min_points must be positive")
        if not (self.voxel > 0 and np.isfinite(self.voxel)):
            raise DatasetError("stream voxel must be positive and finite")
        object.__setattr__(self, "vocabulary", tuple(str(v) for v in self.vocabulary))

    def header_bytes(self) -> bytes:
        payload = {
            "dim": self.dim,
            "min_points": self.min_points,
            "vocabulary": list(self.vocabulary),
            "voxel": self.voxel,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


class ExportObservation(NamedTuple):
    points: np.ndarray
    feature: np.ndarray
    class_id: Optional[str]


class ExportFrame(NamedTuple):
    frame_id: int
    translation: np.ndarray
    rotation: np.ndarray
    observations: Tuple[ExportObservation, ...]


class ExportCloud(NamedTuple):
    frame_id: int
    points: np.ndarray


ExportItem = Union[ExportFrame, ExportCloud]


def _check_points(points: np.ndarray, context: str) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DatasetError(f"{context}: points must be an (n, 3) array")
    if len(pts) and not np.isfinite(pts).all():
        raise DatasetError(f"{context}: points contain non-finite values")
    return pts


def _pack_frame(frame: ExportFrame, spec: StreamSpec) -> bytes:
    context = f"frame {frame.frame_id}"
    t = np.asarray(frame.translation, dtype=np.float64).reshape(3)
    q = np.asarray(frame.rotation, dtype=np.float64).reshape(4)
    if not (np.isfinite(t).all() and np.isfinite(q).all()):
        raise DatasetError(f"{context}: pose contains non-finite values")
    qnorm = float(np.linalg.norm(q))
    if abs(qnorm - 1.0) > 1e-6:
        raise DatasetError(f"{context}: pose quaternion must be unit length, |q| = {qnorm}")
    parts = [
        struct.pack("<Q", frame.frame_id),
        t.astype("<f8").tobytes(),
        q.astype("<f8").tobytes(),
        struct.pack("<I", len(frame.observations)),
    ]
    for i, obs in enumerate(frame.observations):
        pts = _check_points(obs.points, f"{context}: observation {i}")
        if len(pts) < spec.min_points:
            raise DatasetError(
                f"{context}: observation {i} has {len(pts)} points, "
                f"below min_points {spec.min_points}"
            )
        feat = np.asarray(obs.feature, dtype=np.float64).reshape(-1)
        if feat.shape[0] != spec.dim:
            raise DatasetError(
                f"{context}: observation {i} feature dimension {feat.shape[0]} "
                f"!= stream dim {spec.dim}"
            )
        if not np.isfinite(feat).all():
            raise DatasetError(f"{context}: observation {i} feature is not finite")
        parts.append(struct.pack("<I", len(pts)))
        parts.append(pts.astype("<f8").tobytes())
        parts.append(feat.astype("<f4").tobytes())
        if obs.class_id is None:
            parts.append(struct.pack("<BH", 0, 0))
        else:
            raw = obs.class_id.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise DatasetError(f"{context}: class id longer than 65535 bytes")
            parts.append(struct.pack("<BH", 1, len(raw)))
            parts.append(raw)
    return b"".join(parts)


def _pack_cloud(cloud: ExportCloud) -> bytes:
    if cloud.frame_id < 0:
        raise DatasetError(f"cloud for frame {cloud.frame_id}: frame id must be non-negative")
    pts = _check_points(cloud.points, f"cloud for frame {cloud.frame_id}")
    return (
        struct.pack("<Q", cloud.frame_id)
        + struct.pack("<I", len(pts))
        + pts.astype("<f8").tobytes()
    )


def stream_bytes(items: Iterable[ExportItem], spec: StreamSpec) -> bytes:
    """Serialize a full stream; validates every documented invariant."""
    head = spec.header_bytes()
    parts: List[bytes] = [MAGIC, struct.pack("<B", VERSION), struct.pack("<I", len(head)), head]
    last_frame_id = -1
    for item in items:
        if isinstance(item, ExportFrame):
            if item.frame_id < 0:
                raise DatasetError(f"frame {item.frame_id}: frame id must be non-negative")
            if item.frame_id <= last_frame_id:
                raise DatasetError(
                    f"frame {item.frame_id}: frame id not strictly increasing "
                    f"(previous {last_frame_id})"
                )
            last_frame_id = item.frame_id
            payload = _pack_frame(item, spec)
            parts.append(struct.pack("<BI", FRAME_RECORD, len(payload)))
        elif isinstance(item, ExportCloud):
            payload = _pack_cloud(item)
            parts.append(struct.pack("<BI", CLOUD_RECORD, len(payload)))
        else:
            raise TypeError(f"unsupported stream item {type(item)!r}")
        parts.append(payload)
    return b"".join(parts)


def write_dmos(path: PathLike, items: Sequence[ExportItem], spec: StreamSpec) -> int:
    """Write the stream atomically; returns the number of records written."""
    data = stream_bytes(items, spec)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(list(items))
