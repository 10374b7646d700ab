"""Brute-force reference implementations used to check the package.

Everything here favors obviousness over speed: plain Python loops, sets, and
quaternion algebra written out longhand, so each function can be checked by
reading it. Product code must agree with these on randomized inputs.
"""

from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np


def quat_mul(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float, float, float]:
    """Hamilton product of two (w, x, y, z) quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_rotate_brute(q: Sequence[float], v: Sequence[float]) -> Tuple[float, float, float]:
    """Rotate v by unit quaternion q via the sandwich product q * (0, v) * q⁻¹."""
    w, x, y, z = q
    conj = (w, -x, -y, -z)
    _, rx, ry, rz = quat_mul(quat_mul(q, (0.0, v[0], v[1], v[2])), conj)
    return rx, ry, rz


def back_project_brute(
    depth: np.ndarray,
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    depth_scale: float,
    mask: Optional[np.ndarray] = None,
    stride: int = 1,
) -> List[Tuple[float, float, float]]:
    """Row-major lift of valid depth pixels into the camera frame."""
    height, width = depth.shape
    out: List[Tuple[float, float, float]] = []
    for v in range(height):
        for u in range(width):
            if int(depth[v, u]) == 0:
                continue
            if mask is not None and not mask[v, u]:
                continue
            if v % stride != 0 or u % stride != 0:
                continue
            z = float(depth[v, u]) * depth_scale
            out.append(((u - cx) * z / fx, (v - cy) * z / fy, z))
    return out


def transform_brute(
    points: Sequence[Sequence[float]], translation: Sequence[float], rotation: Sequence[float]
) -> List[Tuple[float, float, float]]:
    """Apply a pose point by point through the quaternion sandwich product."""
    out = []
    for p in points:
        rx, ry, rz = quat_rotate_brute(rotation, p)
        out.append((rx + translation[0], ry + translation[1], rz + translation[2]))
    return out


def bbox_iou_brute(a: Sequence[int], b: Sequence[int]) -> float:
    """IoU via explicit pixel sets; fine for small boxes."""
    cells_a = {(x, y) for x in range(a[0], a[2]) for y in range(a[1], a[3])}
    cells_b = {(x, y) for x in range(b[0], b[2]) for y in range(b[1], b[3])}
    inter = len(cells_a & cells_b)
    if inter == 0:
        return 0.0
    return inter / len(cells_a | cells_b)


def mask_iou_brute(a: np.ndarray, b: np.ndarray) -> float:
    set_a = {tuple(idx) for idx in np.argwhere(a)}
    set_b = {tuple(idx) for idx in np.argwhere(b)}
    inter = len(set_a & set_b)
    if inter == 0:
        return 0.0
    return inter / len(set_a | set_b)


def histogram_brute(image: np.ndarray, mask: np.ndarray, bins: int) -> np.ndarray:
    """Per-channel counts via loops, normalized by the masked pixel count."""
    counts = np.zeros((3, bins), dtype=np.float64)
    total = 0
    height, width = mask.shape
    for v in range(height):
        for u in range(width):
            if not mask[v, u]:
                continue
            total += 1
            for c in range(3):
                counts[c, int(image[v, u, c]) * bins // 256] += 1.0
    if total == 0:
        return counts
    return counts / total


def intersection_brute(h1: np.ndarray, h2: np.ndarray) -> float:
    acc = 0.0
    for c in range(h1.shape[0]):
        for k in range(h1.shape[1]):
            acc += min(h1[c, k], h2[c, k])
    return acc / h1.shape[0]


def combine_fsum(
    image_feature: Sequence[float],
    text_feature: Sequence[float],
    image_weight: float = 0.7,
    text_weight: float = 0.3,
) -> np.ndarray:
    """Compensated-summation version of the feature blend."""
    def normalize(vec: Sequence[float]) -> List[float]:
        norm = math.sqrt(math.fsum(float(x) * float(x) for x in vec))
        return [float(x) / norm for x in vec]

    img = normalize(image_feature)
    txt = normalize(text_feature)
    blended = [image_weight * a + text_weight * b for a, b in zip(img, txt)]
    return np.array(normalize(blended))


def null_text_fsum(text_features: Sequence[Sequence[float]]) -> np.ndarray:
    def normalize(vec: Sequence[float]) -> List[float]:
        norm = math.sqrt(math.fsum(float(x) * float(x) for x in vec))
        return [float(x) / norm for x in vec]

    normalized = [normalize(t) for t in text_features]
    dim = len(normalized[0])
    mean = [math.fsum(t[i] for t in normalized) / len(normalized) for i in range(dim)]
    return np.array(normalize(mean))


def decode_rle_brute(runs: Sequence[int], shape: Tuple[int, int]) -> np.ndarray:
    bits: List[bool] = []
    value = False
    for run in runs:
        bits.extend([value] * int(run))
        value = not value
    return np.array(bits, dtype=bool).reshape(shape)
