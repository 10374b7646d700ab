"""Detection records and the saved-model-output file format.

Model inference happens upstream; each frame's detections arrive as one JSON
file with two lists, ``closed_set`` and ``open_set``. Closed-set entries come
from an in-list detector and carry a class id plus a confidence; open-set
entries are class-free segments. Masks are stored run-length encoded over the
row-major flattened image: alternating run lengths starting with a zero run
(which may have length 0), summing to exactly height x width.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DatasetError

PathLike = Union[str, Path]

CLOSED_SET = "closed_set"
OPEN_SET = "open_set"

BBox = Tuple[int, int, int, int]


def decode_rle(runs: Sequence[int], shape: Tuple[int, int], context: str = "mask") -> np.ndarray:
    """Expand alternating zero/one run lengths into an (H, W) bool mask."""
    height, width = shape
    total = height * width
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        run = int(run)
        if run < 0:
            raise DatasetError(f"{context}: negative run length {run}")
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    if pos != total:
        raise DatasetError(f"{context}: run lengths sum to {pos}, expected {total}")
    return flat.reshape(height, width)


def encode_rle(mask: np.ndarray) -> List[int]:
    """Inverse of decode_rle; always starts with a zero run."""
    flat = np.asarray(mask, dtype=bool).ravel()
    runs: List[int] = []
    value = False
    length = 0
    for bit in flat:
        if bit == value:
            length += 1
        else:
            runs.append(length)
            value = bool(bit)
            length = 1
    runs.append(length)
    return runs


@dataclass(frozen=True, eq=False)
class DetectionRecord:
    """One detected instance in one frame.

    The bbox is half-open pixel coordinates (x0, y0, x1, y1); the mask is a
    full-size boolean image. Closed-set records always carry a class id,
    open-set records never do.
    """

    bbox: BBox
    mask: np.ndarray
    source: str
    crop_feature: np.ndarray
    class_id: Optional[str] = None
    confidence: float = 0.0

    def __post_init__(self) -> None:
        if self.source not in (CLOSED_SET, OPEN_SET):
            raise DatasetError(f"unknown detection source {self.source!r}")
        if self.source == CLOSED_SET and self.class_id is None:
            raise DatasetError("closed-set detection without a class id")
        if self.source == OPEN_SET and self.class_id is not None:
            raise DatasetError("open-set detection must not carry a class id")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise DatasetError("mask must be a 2-D boolean image")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        height, width = mask.shape
        x0, y0, x1, y1 = (int(v) for v in self.bbox)
        if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
            raise DatasetError(
                f"bbox ({x0}, {y0}, {x1}, {y1}) outside {width}x{height} image"
            )
        object.__setattr__(self, "bbox", (x0, y0, x1, y1))
        feat = np.asarray(self.crop_feature, dtype=np.float64).reshape(-1)
        if feat.size == 0 or not np.isfinite(feat).all():
            raise DatasetError("crop feature must be a non-empty finite vector")
        feat.setflags(write=False)
        object.__setattr__(self, "crop_feature", feat)
        conf = float(self.confidence)
        if not (0.0 <= conf <= 1.0):
            raise DatasetError(f"confidence {conf} outside [0, 1]")
        object.__setattr__(self, "confidence", conf)

    @property
    def mask_area(self) -> int:
        return int(self.mask.sum())


def _parse_entry(
    entry: dict,
    source: str,
    shape: Tuple[int, int],
    dim: int,
    classes: Sequence[str],
    context: str,
) -> DetectionRecord:
    try:
        bbox = tuple(int(v) for v in entry["bbox"])
        runs = entry["mask_rle"]
        feature = entry["crop_feature"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{context}: malformed detection entry: {exc}") from exc
    if len(bbox) != 4:
        raise DatasetError(f"{context}: bbox must have 4 values")
    mask = decode_rle(runs, shape, context)
    feat = np.asarray(feature, dtype=np.float64).reshape(-1)
    if feat.shape[0] != dim:
        raise DatasetError(
            f"{context}: crop feature has dimension {feat.shape[0]}, expected {dim}"
        )
    class_id: Optional[str] = None
    confidence = 0.0
    if source == CLOSED_SET:
        try:
            class_id = str(entry["class_id"])
            confidence = float(entry["confidence"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{context}: closed-set entry missing field: {exc}") from exc
        if class_id not in classes:
            raise DatasetError(f"{context}: class {class_id!r} not in vocabulary")
    return DetectionRecord(
        bbox=bbox,  # type: ignore[arg-type]
        mask=mask,
        source=source,
        crop_feature=feat,
        class_id=class_id,
        confidence=confidence,
    )


def load_frame_detections(
    path: PathLike, shape: Tuple[int, int], dim: int, classes: Sequence[str]
) -> Tuple[List[DetectionRecord], List[DetectionRecord]]:
    """Read one frame's saved model outputs; returns (closed, open) lists."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DatasetError(f"{path}: unreadable detections file: {exc}") from exc
    if not isinstance(data, dict):
        raise DatasetError(f"{path}: expected a JSON object")
    closed = [
        _parse_entry(entry, CLOSED_SET, shape, dim, classes, f"{path}[closed {i}]")
        for i, entry in enumerate(data.get("closed_set", []))
    ]
    open_set = [
        _parse_entry(entry, OPEN_SET, shape, dim, classes, f"{path}[open {i}]")
        for i, entry in enumerate(data.get("open_set", []))
    ]
    return closed, open_set
