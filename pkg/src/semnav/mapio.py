"""On-disk formats for maps, scene clouds, layouts, and episode logs.

All binary formats are little-endian and open with a 4-byte magic, a u8
version, and a u32-length JSON header that echoes the effective config for
provenance. Payload vectors are float64 throughout, so a load returns exactly
the arrays that were saved. Every writer goes through an atomic
temp-file-plus-rename so a crashed run never leaves a partial file behind.

    .dmcm  concrete map: objects with clouds and full observation histories
    .dmam  abstract map: anchors, volatile features, occupancy layout
    .dmsc  scene cloud: accumulated structure points plus keyframe pose
    .dmlc  labeled cloud: evaluation fixtures (points, labels, class names)

Episode logs are JSON-lines text files, one event or episode record per line.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from .abstract import AbstractMap, Anchor, OccupancyLayout
from .concrete import ConcreteMap, HistoryEntry, MapObject
from .config import RunConfig
from .errors import MapFormatError
from .geometry import Footprint, PointCloud
from .metrics import LabeledCloud
from .stream import Observation, Pose, SceneCloud, _Cursor

PathLike = Union[str, Path]

CONCRETE_MAGIC = b"DMCM"
ABSTRACT_MAGIC = b"DMAM"
SCENE_MAGIC = b"DMSC"
LABELED_MAGIC = b"DMLC"
VERSION = 1


def _atomic_write(path: PathLike, data: bytes) -> None:
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


def _json_header(payload: dict) -> bytes:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("<I", len(body)) + body


def _open_container(data: bytes, magic: bytes, context: str) -> Tuple[dict, _Cursor]:
    if data[:4] != magic:
        raise MapFormatError(f"{context}: bad magic {data[:4]!r}, expected {magic!r}")
    if len(data) < 5 or data[4] != VERSION:
        raise MapFormatError(f"{context}: unsupported version")
    cur = _Cursor(data[5:], offset=5, context=context, error_cls=MapFormatError)
    (hlen,) = cur.unpack("<I")
    try:
        header = json.loads(cur.take(hlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MapFormatError(f"{context}: unreadable header: {exc}") from exc
    if not isinstance(header, dict):
        raise MapFormatError(f"{context}: header must be a JSON object")
    return header, cur


def _pack_points(points: np.ndarray) -> bytes:
    flat = np.ascontiguousarray(points, dtype="<f8")
    return struct.pack("<Q", len(points)) + flat.tobytes()


def _read_points(cur: _Cursor) -> np.ndarray:
    (n,) = cur.unpack("<Q")
    raw = cur.take(n * 24)
    return np.frombuffer(raw, dtype="<f8").reshape(n, 3).astype(np.float64)


def _pack_feature(feature: np.ndarray) -> bytes:
    return np.ascontiguousarray(feature, dtype="<f8").tobytes()


def _read_feature(cur: _Cursor, dim: int) -> np.ndarray:
    raw = cur.take(dim * 8)
    return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def _pack_optional_str(value: Optional[str]) -> bytes:
    if value is None:
        return struct.pack("<B", 0)
    raw = value.encode("utf-8")
    return struct.pack("<BH", 1, len(raw)) + raw


def _read_optional_str(cur: _Cursor) -> Optional[str]:
    (flag,) = cur.unpack("<B")
    if flag == 0:
        return None
    (n,) = cur.unpack("<H")
    return cur.take(n).decode("utf-8")


def _pack_cells(cells) -> bytes:
    ordered = sorted(cells)
    out = [struct.pack("<Q", len(ordered))]
    for cx, cy in ordered:
        out.append(struct.pack("<qq", cx, cy))
    return b"".join(out)


def _read_cells(cur: _Cursor) -> List[Tuple[int, int]]:
    (n,) = cur.unpack("<Q")
    return [tuple(cur.unpack("<qq")) for _ in range(n)]


def peek_header(path: PathLike) -> Tuple[bytes, dict]:
    """Magic and JSON header of any map container, without loading the payload."""
    with open(path, "rb") as fh:
        head = fh.read(9)
        if len(head) < 9:
            raise MapFormatError(f"{path}: too short for a container header")
        magic = head[:4]
        if magic not in (CONCRETE_MAGIC, ABSTRACT_MAGIC, SCENE_MAGIC, LABELED_MAGIC):
            raise MapFormatError(f"{path}: bad magic {magic!r}")
        if head[4] != VERSION:
            raise MapFormatError(f"{path}: unsupported version")
        (hlen,) = struct.unpack("<I", head[5:9])
        body = fh.read(hlen)
    if len(body) != hlen:
        raise MapFormatError(f"{path}: truncated header")
    try:
        header = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MapFormatError(f"{path}: unreadable header: {exc}") from exc
    return magic, header


# --- concrete map (.dmcm) ---------------------------------------------------


def save_concrete(cmap: ConcreteMap, path: PathLike) -> None:
    config = cmap.config
    header = {
        "config": config.to_dict(),
        "dim": config.dim,
        "objects": len(cmap.objects),
        "next_object_id": cmap.next_object_id,
        "last_frame_id": cmap.last_frame_id,
    }
    parts = [CONCRETE_MAGIC, struct.pack("<B", VERSION), _json_header(header)]
    for oid in sorted(cmap.objects):
        obj = cmap.objects[oid]
        parts.append(struct.pack("<Q", oid))
        parts.append(_pack_points(obj.cloud.points))
        parts.append(struct.pack("<Q", len(obj.history)))
        for entry in obj.history:
            obs = entry.observation
            parts.append(struct.pack("<q", obs.timestamp))
            parts.append(_pack_optional_str(obs.class_id))
            parts.append(_pack_feature(obs.feature))
            parts.append(_pack_points(obs.cloud.points))
    _atomic_write(path, b"".join(parts))


def load_concrete(path: PathLike) -> ConcreteMap:
    data = Path(path).read_bytes()
    header, cur = _open_container(data, CONCRETE_MAGIC, str(path))
    config = RunConfig.from_dict(header["config"])
    dim = int(header["dim"])
    cmap = ConcreteMap(config)
    for _ in range(int(header["objects"])):
        (oid,) = cur.unpack("<Q")
        cloud = PointCloud(_read_points(cur))
        (n_hist,) = cur.unpack("<Q")
        history: List[HistoryEntry] = []
        for _ in range(n_hist):
            (timestamp,) = cur.unpack("<q")
            class_id = _read_optional_str(cur)
            feature = _read_feature(cur, dim)
            obs_cloud = PointCloud(_read_points(cur))
            obs = Observation(
                cloud=obs_cloud, feature=feature, class_id=class_id, timestamp=timestamp
            )
            history.append(HistoryEntry(timestamp, class_id, obs))
        cmap.objects[int(oid)] = MapObject._from_parts(int(oid), cloud, history)
    if not cur.done():
        raise MapFormatError(f"{path}: trailing bytes after last object")
    cmap.next_object_id = int(header["next_object_id"])
    cmap.last_frame_id = int(header["last_frame_id"])
    return cmap


# --- abstract map (.dmam) ---------------------------------------------------


def _pack_footprint(fp: Footprint) -> bytes:
    parts = [struct.pack("<d", fp.resolution)]
    if fp.z_support is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<Bd", 1, fp.z_support))
    parts.append(_pack_cells(fp.cells))
    return b"".join(parts)


def _read_footprint(cur: _Cursor) -> Footprint:
    (resolution,) = cur.unpack("<d")
    (flag,) = cur.unpack("<B")
    z_support = None
    if flag:
        (z_support,) = cur.unpack("<d")
    cells = frozenset(_read_cells(cur))
    return Footprint(cells=cells, resolution=resolution, z_support=z_support)


def save_abstract(amap: AbstractMap, config: RunConfig, path: PathLike) -> None:
    layout = amap.layout
    header = {
        "config": config.to_dict(),
        "dim": config.dim,
        "anchors": len(amap.anchors),
        "next_anchor_id": amap.next_anchor_id,
        "layout": {
            "resolution": layout.resolution,
            "bounds": None if layout.bounds is None else list(layout.bounds),
        },
    }
    parts = [ABSTRACT_MAGIC, struct.pack("<B", VERSION), _json_header(header)]
    parts.append(_pack_cells(layout.occupied))
    for aid in sorted(amap.anchors):
        anchor = amap.anchors[aid]
        parts.append(struct.pack("<Q", aid))
        parts.append(_pack_optional_str(anchor.class_id))
        parts.append(_pack_feature(anchor.feature))
        if anchor.support_z is None:
            parts.append(struct.pack("<B", 0))
        else:
            parts.append(struct.pack("<Bd", 1, anchor.support_z))
        parts.append(struct.pack("<Q", anchor.cloud_size))
        parts.append(_pack_footprint(anchor.footprint))
        parts.append(struct.pack("<H", len(anchor.volatile_features)))
        for vol in anchor.volatile_features:
            parts.append(_pack_feature(vol))
    _atomic_write(path, b"".join(parts))


def load_abstract(path: PathLike) -> Tuple[AbstractMap, RunConfig]:
    data = Path(path).read_bytes()
    header, cur = _open_container(data, ABSTRACT_MAGIC, str(path))
    config = RunConfig.from_dict(header["config"])
    dim = int(header["dim"])
    lspec = header["layout"]
    occupied = frozenset(_read_cells(cur))
    bounds = lspec["bounds"]
    layout = OccupancyLayout(
        resolution=float(lspec["resolution"]),
        occupied=occupied,
        bounds=None if bounds is None else tuple(int(b) for b in bounds),
    )
    anchors: Dict[int, Anchor] = {}
    for _ in range(int(header["anchors"])):
        (aid,) = cur.unpack("<Q")
        class_id = _read_optional_str(cur)
        feature = _read_feature(cur, dim)
        (flag,) = cur.unpack("<B")
        support_z = None
        if flag:
            (support_z,) = cur.unpack("<d")
        (cloud_size,) = cur.unpack("<Q")
        footprint = _read_footprint(cur)
        (n_vol,) = cur.unpack("<H")
        volatiles = tuple(_read_feature(cur, dim) for _ in range(n_vol))
        anchors[int(aid)] = Anchor(
            id=int(aid),
            class_id=class_id,
            feature=feature,
            footprint=footprint,
            support_z=support_z,
            cloud_size=int(cloud_size),
            volatile_features=volatiles,
        )
    if not cur.done():
        raise MapFormatError(f"{path}: trailing bytes after last anchor")
    amap = AbstractMap(
        anchors=anchors, layout=layout, next_anchor_id=int(header["next_anchor_id"])
    )
    return amap, config


# --- scene cloud (.dmsc) ----------------------------------------------------


def save_scene(scene: SceneCloud, path: PathLike, config: Optional[RunConfig] = None) -> None:
    pose = scene.last_keyframe
    header = {
        "config": None if config is None else config.to_dict(),
        "voxel": scene.voxel,
        "last_keyframe": (
            None
            if pose is None
            else {
                "translation": [float(v) for v in pose.translation],
                "rotation": [float(v) for v in pose.rotation],
            }
        ),
    }
    parts = [SCENE_MAGIC, struct.pack("<B", VERSION), _json_header(header)]
    parts.append(_pack_points(scene.cloud.points))
    _atomic_write(path, b"".join(parts))


def load_scene(path: PathLike) -> SceneCloud:
    data = Path(path).read_bytes()
    header, cur = _open_container(data, SCENE_MAGIC, str(path))
    points = _read_points(cur)
    if not cur.done():
        raise MapFormatError(f"{path}: trailing bytes after scene points")
    pose = None
    if header["last_keyframe"] is not None:
        spec = header["last_keyframe"]
        pose = Pose(
            translation=np.array(spec["translation"], dtype=np.float64),
            rotation=np.array(spec["rotation"], dtype=np.float64),
        )
    return SceneCloud(
        cloud=PointCloud(points), voxel=float(header["voxel"]), last_keyframe=pose
    )


# --- labeled cloud (.dmlc) --------------------------------------------------


def save_labeled(cloud: LabeledCloud, path: PathLike) -> None:
    header = {"classes": list(cloud.class_names), "points": len(cloud)}
    parts = [LABELED_MAGIC, struct.pack("<B", VERSION), _json_header(header)]
    parts.append(_pack_points(cloud.points))
    parts.append(np.ascontiguousarray(cloud.labels, dtype="<i8").tobytes())
    _atomic_write(path, b"".join(parts))


def load_labeled(path: PathLike) -> LabeledCloud:
    data = Path(path).read_bytes()
    header, cur = _open_container(data, LABELED_MAGIC, str(path))
    points = _read_points(cur)
    labels = np.frombuffer(cur.take(len(points) * 8), dtype="<i8").astype(np.int64)
    if not cur.done():
        raise MapFormatError(f"{path}: trailing bytes after labels")
    return LabeledCloud(
        points=points, labels=labels, class_names=tuple(header["classes"])
    )


# --- layout image export ----------------------------------------------------


def export_layout_pgm(layout: OccupancyLayout, path: PathLike) -> None:
    """Binary portable graymap of the layout: occupied black, free white."""
    if layout.bounds is None:
        raise MapFormatError("cannot export an empty layout")
    ix_min, iy_min, ix_max, iy_max = layout.bounds
    width = ix_max - ix_min + 1
    height = iy_max - iy_min + 1
    img = np.full((height, width), 255, dtype=np.uint8)
    for cx, cy in layout.occupied:
        # Row 0 is the top of the image (max y), PGM raster order.
        img[iy_max - cy, cx - ix_min] = 0
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    _atomic_write(path, header + img.tobytes())


# --- episode logs (.jsonl) --------------------------------------------------


def write_episode_log(events: Iterable[dict], path: PathLike) -> int:
    """One JSON object per line; returns the number of lines written."""
    lines = [json.dumps(event, sort_keys=True) for event in events]
    _atomic_write(path, ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8"))
    return len(lines)


def read_episode_log(path: PathLike) -> List[dict]:
    out: List[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise MapFormatError(f"{path}:{line_no}: bad JSON line: {exc}") from exc
    return out
