"""Observation streams: frame records, scene-cloud accumulation, .dmos format.

A stream is a header followed by length-delimited records. Two record kinds
exist: per-frame observation sets (segmented detections with clouds and
features) and optional full-frame clouds used for scene-level accumulation.

Binary layout (all little-endian):

    magic  b"DMOS"
    u8     version (currently 1)
    u32    header length, then that many bytes of JSON:
           {"dim": int, "min_points": int, "vocabulary": [str...], "voxel": float}
    records, each:
      u8   record type (1 = frame, 2 = full-frame cloud)
      u32  payload length
      payload:
        type 1: u64 frame_id; 7 x f64 pose (tx ty tz, qw qx qy qz);
                u32 n_observations; per observation:
                  u32 n_points; n_points x 3 f64; dim x f32 feature;
                  u8 has_class; u16 class byte length; utf-8 class bytes
        type 2: u64 frame_id; u32 n_points; n_points x 3 f64

Feature vectors are stored at 32-bit precision; in-memory features are float64,
so exact round trips hold whenever features originate from float32 values
(which every producer in this repo guarantees).
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from .errors import StreamFormatError
from .features import as_feature
from .geometry import EMPTY_CLOUD, PointCloud, voxel_downsample

MAGIC = b"DMOS"
VERSION = 1
_FRAME_RECORD = 1
_CLOUD_RECORD = 2


@dataclass(frozen=True, eq=False)
class Pose:
    """Camera pose: translation in meters plus a unit quaternion (w, x, y, z)."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        if not (np.isfinite(t).all() and np.isfinite(q).all()):
            raise ValueError("pose contains non-finite values")
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"pose quaternion must be unit length, |q| = {norm}")
        t.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    def translation_delta(self, other: "Pose") -> float:
        return float(np.linalg.norm(self.translation - other.translation))

    def rotation_delta_deg(self, other: "Pose") -> float:
        """Geodesic angle between the two orientations, in degrees."""
        dot = abs(float(np.dot(self.rotation, other.rotation)))
        dot = min(1.0, dot)
        return math.degrees(2.0 * math.acos(dot))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.translation, other.translation) and np.array_equal(
            self.rotation, other.rotation
        )

    def __hash__(self) -> int:
        return hash((self.translation.tobytes(), self.rotation.tobytes()))


def yaw_pose(x: float, y: float, z: float, yaw_rad: float) -> Pose:
    """Pose at (x, y, z) rotated about +Z by yaw."""
    half = 0.5 * yaw_rad
    return Pose(
        translation=np.array([x, y, z], dtype=np.float64),
        rotation=np.array([math.cos(half), 0.0, 0.0, math.sin(half)], dtype=np.float64),
    )


@dataclass(frozen=True, eq=False)
class Observation:
    """One segmented detection: cloud, unit feature, optional class, timestamp."""

    cloud: PointCloud
    feature: np.ndarray
    class_id: Optional[str]
    timestamp: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "feature", as_feature(self.feature))
        if self.timestamp < 0:
            raise ValueError("timestamp must be non-negative")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Observation):
            return NotImplemented
        return (
            self.timestamp == other.timestamp
            and self.class_id == other.class_id
            and np.array_equal(self.feature, other.feature)
            and self.cloud == other.cloud
        )

    def __hash__(self) -> int:
        return id(self)


@dataclass(frozen=True, eq=False)
class FrameRecord:
    """All observations produced for one frame, with the camera pose."""

    frame_id: int
    pose: Pose
    observations: Tuple[Observation, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "observations", tuple(self.observations))
        if self.frame_id < 0:
            raise ValueError("frame_id must be non-negative")
        for i, obs in enumerate(self.observations):
            if obs.timestamp != self.frame_id:
                raise ValueError(
                    f"frame {self.frame_id}: observation {i} timestamp "
                    f"{obs.timestamp} != frame_id"
                )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrameRecord):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.pose == other.pose
            and self.observations == other.observations
        )

    def __hash__(self) -> int:
        return id(self)


class FullFrameCloud(NamedTuple):
    """Whole-frame projected cloud attached to a frame id."""

    frame_id: int
    cloud: PointCloud


StreamItem = Union[FrameRecord, FullFrameCloud]


@dataclass(frozen=True)
class StreamHeader:
    dim: int
    voxel: float = 0.05
    vocabulary: Tuple[str, ...] = ()
    min_points: int = 10

    def to_json(self) -> bytes:
        payload = {
            "dim": self.dim,
            "min_points": self.min_points,
            "vocabulary": list(self.vocabulary),
            "voxel": self.voxel,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_json(cls, raw: bytes) -> "StreamHeader":
        try:
            data = json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise StreamFormatError(f"unreadable stream header: {exc}") from exc
        try:
            return cls(
                dim=int(data["dim"]),
                voxel=float(data["voxel"]),
                vocabulary=tuple(data.get("vocabulary", [])),
                min_points=int(data.get("min_points", 10)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise StreamFormatError(f"stream header missing field: {exc}") from exc


# --- scene cloud ---------------------------------------------------------


@dataclass(frozen=True)
class SceneCloud:
    """Scene-level accumulated cloud, merged only at keyframes.

    Immutable: ``update`` returns a new SceneCloud. The first frame always
    merges; afterwards a frame is a keyframe when the pose moved strictly more
    than the translation threshold or rotated strictly more than the rotation
    threshold since the last merged keyframe.
    """

    cloud: PointCloud = EMPTY_CLOUD
    voxel: float = 0.05
    last_keyframe: Optional[Pose] = None

    def is_keyframe(
        self, pose: Pose, translation_threshold: float, rotation_threshold_deg: float
    ) -> bool:
        if self.last_keyframe is None:
            return True
        return (
            pose.translation_delta(self.last_keyframe) > translation_threshold
            or pose.rotation_delta_deg(self.last_keyframe) > rotation_threshold_deg
        )

    def update(
        self,
        pose: Pose,
        full_frame_cloud: PointCloud,
        translation_threshold: float = 1.0,
        rotation_threshold_deg: float = 20.0,
    ) -> "SceneCloud":
        if not self.is_keyframe(pose, translation_threshold, rotation_threshold_deg):
            return self
        merged = voxel_downsample(self.cloud.merged(full_frame_cloud), self.voxel)
        return SceneCloud(cloud=merged, voxel=self.voxel, last_keyframe=pose)


# --- binary writer -------------------------------------------------------


def _pack_frame(frame: FrameRecord, dim: int) -> bytes:
    buf = io.BytesIO()
    buf.write(struct.pack("<Q", frame.frame_id))
    buf.write(frame.pose.translation.astype("<f8").tobytes())
    buf.write(frame.pose.rotation.astype("<f8").tobytes())
    buf.write(struct.pack("<I", len(frame.observations)))
    for obs in frame.observations:
        pts = obs.cloud.points
        buf.write(struct.pack("<I", len(pts)))
        buf.write(pts.astype("<f8").tobytes())
        buf.write(obs.feature.astype("<f4").tobytes())
        if obs.class_id is None:
            buf.write(struct.pack("<BH", 0, 0))
        else:
            raw = obs.class_id.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise StreamFormatError(
                    f"frame {frame.frame_id}: class id longer than 65535 bytes"
                )
            buf.write(struct.pack("<BH", 1, len(raw)))
            buf.write(raw)
    return buf.getvalue()


def _pack_cloud(item: FullFrameCloud) -> bytes:
    pts = item.cloud.points
    return (
        struct.pack("<Q", item.frame_id)
        + struct.pack("<I", len(pts))
        + pts.astype("<f8").tobytes()
    )


def write_stream(items: Iterable[StreamItem], sink: BinaryIO, header: StreamHeader) -> int:
    """Write frames and full-frame clouds; returns the record count.

    Validates the stream invariants up front: frame ids strictly increasing,
    observation clouds at or above the minimum point count with finite values,
    features matching the header dimension. Violations raise StreamFormatError
    naming the frame and field.
    """
    sink.write(MAGIC)
    sink.write(struct.pack("<B", VERSION))
    head = header.to_json()
    sink.write(struct.pack("<I", len(head)))
    sink.write(head)
    count = 0
    last_frame_id = -1
    for item in items:
        if isinstance(item, FrameRecord):
            if item.frame_id <= last_frame_id:
                raise StreamFormatError(
                    f"frame {item.frame_id}: frame_id not strictly increasing "
                    f"(previous {last_frame_id})"
                )
            last_frame_id = item.frame_id
            for i, obs in enumerate(item.observations):
                if len(obs.cloud) < header.min_points:
                    raise StreamFormatError(
                        f"frame {item.frame_id}: observation {i} cloud below "
                        f"min_points ({len(obs.cloud)} < {header.min_points})"
                    )
                if obs.feature.shape[0] != header.dim:
                    raise StreamFormatError(
                        f"frame {item.frame_id}: observation {i} feature dimension "
                        f"{obs.feature.shape[0]} != header dim {header.dim}"
                    )
            payload = _pack_frame(item, header.dim)
            sink.write(struct.pack("<BI", _FRAME_RECORD, len(payload)))
        elif isinstance(item, FullFrameCloud):
            payload = _pack_cloud(item)
            sink.write(struct.pack("<BI", _CLOUD_RECORD, len(payload)))
        else:
            raise TypeError(f"unsupported stream item {type(item)!r}")
        sink.write(payload)
        count += 1
    return count


# --- binary reader -------------------------------------------------------


class _Cursor:
    """Byte cursor with located error messages."""

    def __init__(
        self, data: bytes, offset: int, context: str, error_cls: type = StreamFormatError
    ) -> None:
        self.data = data
        self.pos = 0
        self.offset = offset
        self.context = context
        self.error_cls = error_cls

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise self.error_cls(
                f"{self.context}: truncated at byte {self.offset + self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> bool:
        return self.pos == len(self.data)


class StreamReader:
    """Iterates StreamItems from .dmos bytes, counting per-record rejections.

    Structural corruption (bad magic, unknown version/record type, truncation)
    raises StreamFormatError with a byte offset. Invariant violations reject
    only the offending scope: a malformed observation is dropped from its frame
    (``rejected_observations``), a frame with a non-increasing id is skipped
    whole (``rejected_frames``).
    """

    def __init__(self, source: BinaryIO) -> None:
        self._source = source
        self.rejected_observations = 0
        self.rejected_frames = 0
        magic = source.read(4)
        if magic != MAGIC:
            raise StreamFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        raw = source.read(1)
        if len(raw) != 1:
            raise StreamFormatError("truncated before version byte")
        version = raw[0]
        if version != VERSION:
            raise StreamFormatError(f"unsupported stream version {version}")
        raw = source.read(4)
        if len(raw) != 4:
            raise StreamFormatError("truncated before header length")
        (header_len,) = struct.unpack("<I", raw)
        head = source.read(header_len)
        if len(head) != header_len:
            raise StreamFormatError("truncated inside header")
        self.header = StreamHeader.from_json(head)
        self._offset = 9 + header_len
        self._last_frame_id = -1

    def __iter__(self) -> Iterator[StreamItem]:
        while True:
            prefix = self._source.read(5)
            if len(prefix) == 0:
                return
            if len(prefix) < 5:
                raise StreamFormatError(f"truncated record prefix at byte {self._offset}")
            record_type, length = struct.unpack("<BI", prefix)
            payload = self._source.read(length)
            if len(payload) != length:
                raise StreamFormatError(
                    f"truncated record payload at byte {self._offset + 5}"
                )
            item = self._decode(record_type, payload)
            self._offset += 5 + length
            if item is not None:
                yield item

    def _decode(self, record_type: int, payload: bytes) -> Optional[StreamItem]:
        cur = _Cursor(payload, self._offset + 5, f"record at byte {self._offset}")
        if record_type == _CLOUD_RECORD:
            (frame_id,) = cur.unpack("<Q")
            (n_points,) = cur.unpack("<I")
            pts = np.frombuffer(cur.take(24 * n_points), dtype="<f8").reshape(n_points, 3)
            if not cur.done():
                raise StreamFormatError(f"{cur.context}: trailing bytes in cloud record")
            return FullFrameCloud(frame_id=frame_id, cloud=PointCloud(pts))
        if record_type != _FRAME_RECORD:
            raise StreamFormatError(
                f"unknown record type {record_type} at byte {self._offset}"
            )
        (frame_id,) = cur.unpack("<Q")
        pose_vals = np.frombuffer(cur.take(56), dtype="<f8")
        (n_obs,) = cur.unpack("<I")
        observations: List[Observation] = []
        for _ in range(n_obs):
            (n_points,) = cur.unpack("<I")
            pts = np.frombuffer(cur.take(24 * n_points), dtype="<f8").reshape(n_points, 3)
            feat = np.frombuffer(cur.take(4 * self.header.dim), dtype="<f4").astype(np.float64)
            has_class, class_len = cur.unpack("<BH")
            class_id = cur.take(class_len).decode("utf-8") if has_class else None
            obs = self._validate_observation(frame_id, pts, feat, class_id)
            if obs is None:
                self.rejected_observations += 1
            else:
                observations.append(obs)
        if not cur.done():
            raise StreamFormatError(f"{cur.context}: trailing bytes in frame record")
        if frame_id <= self._last_frame_id:
            self.rejected_frames += 1
            return None
        self._last_frame_id = frame_id
        try:
            pose = Pose(translation=pose_vals[:3], rotation=pose_vals[3:])
        except ValueError:
            self.rejected_frames += 1
            return None
        return FrameRecord(frame_id=frame_id, pose=pose, observations=tuple(observations))

    def _validate_observation(
        self, frame_id: int, pts: np.ndarray, feat: np.ndarray, class_id: Optional[str]
    ) -> Optional[Observation]:
        if len(pts) < self.header.min_points:
            return None
        if not np.isfinite(pts).all() or not np.isfinite(feat).all():
            return None
        return Observation(
            cloud=PointCloud(pts), feature=feat, class_id=class_id, timestamp=frame_id
        )

    def frames(self) -> Iterator[FrameRecord]:
        for item in self:
            if isinstance(item, FrameRecord):
                yield item


def read_stream(source: BinaryIO) -> Tuple[List[StreamItem], StreamReader]:
    """Read every record eagerly; returns (items, reader-with-counters)."""
    reader = StreamReader(source)
    return list(reader), reader
