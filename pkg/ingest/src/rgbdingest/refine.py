"""Detection refinement: duplicate merging and closed/open fusion.

Closed-set detectors frequently emit several boxes for one object. Two
closed-set records are duplicates when their boxes overlap strongly AND the
color content under their masks agrees; both gates have to fire, so two
genuinely different objects with overlapping boxes survive as long as they
look different. Merging unions the box and the mask and keeps the class,
confidence, and crop feature of the more confident record.

Fusion then supplements the closed set with open-set segments. Closed-set
records are never dropped. An open-set segment whose mask overlap with any
closed-set mask exceeds the drop threshold duplicates an already-detected
object and is discarded; the rest are appended class-free.
"""

from __future__ import annotations

from typing import List, Sequence

import numpy as np

from .records import CLOSED_SET, OPEN_SET, BBox, DetectionRecord


def bbox_iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two half-open pixel boxes."""
    ix0 = max(a[0], b[0])
    iy0 = max(a[1], b[1])
    ix1 = min(a[2], b[2])
    iy1 = min(a[3], b[3])
    inter = max(0, ix1 - ix0) * max(0, iy1 - iy0)
    if inter == 0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / float(area_a + area_b - inter)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean masks; 0 when both are empty."""
    inter = int(np.logical_and(a, b).sum())
    if inter == 0:
        return 0.0
    union = int(np.logical_or(a, b).sum())
    return inter / float(union)


def masked_histogram(image: np.ndarray, mask: np.ndarray, bins: int = 32) -> np.ndarray:
    """Per-channel color histogram over the masked pixels, normalized per channel.

    Returns a (3, bins) float64 array; each channel row sums to 1 when the
    mask is non-empty. Bin k covers sample values [k*256/bins, (k+1)*256/bins).
    """
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("expected an (H, W, 3) uint8 image")
    pixels = img[np.asarray(mask, dtype=bool)]
    out = np.zeros((3, bins), dtype=np.float64)
    if len(pixels) == 0:
        return out
    scaled = pixels.astype(np.int64) * bins // 256
    for c in range(3):
        out[c] = np.bincount(scaled[:, c], minlength=bins) / float(len(pixels))
    return out


def histogram_intersection(h1: np.ndarray, h2: np.ndarray) -> float:
    """Mean over channels of the per-bin minimum sum; in [0, 1]."""
    if h1.shape != h2.shape:
        raise ValueError(f"histogram shapes differ: {h1.shape} vs {h2.shape}")
    return float(np.minimum(h1, h2).sum() / h1.shape[0])


def _merge_pair(a: DetectionRecord, b: DetectionRecord) -> DetectionRecord:
    winner = a if a.confidence >= b.confidence else b
    bbox = (
        min(a.bbox[0], b.bbox[0]),
        min(a.bbox[1], b.bbox[1]),
        max(a.bbox[2], b.bbox[2]),
        max(a.bbox[3], b.bbox[3]),
    )
    return DetectionRecord(
        bbox=bbox,
        mask=np.logical_or(a.mask, b.mask),
        source=CLOSED_SET,
        crop_feature=winner.crop_feature,
        class_id=winner.class_id,
        confidence=winner.confidence,
    )


def refine_closed_set(
    detections: Sequence[DetectionRecord],
    image: np.ndarray,
    iou_threshold: float = 0.5,
    histogram_threshold: float = 0.7,
    bins: int = 32,
) -> List[DetectionRecord]:
    """Merge duplicate closed-set detections until no pair qualifies.

    A pair merges when bbox IoU > iou_threshold and the masked color
    histograms intersect above histogram_threshold. Scanning is in list
    order and restarts after every merge, so the result is deterministic
    and chains of duplicates collapse to a single record.
    """
    for det in detections:
        if det.source != CLOSED_SET:
            raise ValueError("refine_closed_set only accepts closed-set records")
    out = list(detections)
    hists = [masked_histogram(image, det.mask, bins) for det in out]
    merged = True
    while merged:
        merged = False
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                if bbox_iou(out[i].bbox, out[j].bbox) <= iou_threshold:
                    continue
                if histogram_intersection(hists[i], hists[j]) <= histogram_threshold:
                    continue
                out[i] = _merge_pair(out[i], out[j])
                hists[i] = masked_histogram(image, out[i].mask, bins)
                del out[j], hists[j]
                merged = True
                break
            if merged:
                break
    return out


def fuse(
    closed: Sequence[DetectionRecord],
    open_set: Sequence[DetectionRecord],
    drop_iou: float = 0.5,
) -> List[DetectionRecord]:
    """Combine refined closed-set records with non-duplicate open-set segments.

    Every closed-set record is kept. An open-set record is dropped when its
    mask IoU against any closed-set mask exceeds drop_iou; survivors are
    appended in input order, class-free.
    """
    out = list(closed)
    for det in open_set:
        if det.source != OPEN_SET:
            raise ValueError("fuse expects open-set records in the second argument")
        if any(mask_iou(det.mask, kept.mask) > drop_iou for kept in closed):
            continue
        out.append(det)
    return out
