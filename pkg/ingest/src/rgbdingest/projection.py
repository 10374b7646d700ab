"""Pinhole back-projection from depth images to world-frame point clouds.

Depth images store raw integer samples; meters = raw * depth_scale, and a
raw value of zero marks missing depth. A pixel (u, v) with depth z lifts to
the camera-frame point

    x = (u - cx) * z / fx
    y = (v - cy) * z / fy
    z = z

and the camera pose (rotation quaternion q, translation t) places it in the
world frame as R(q) @ p + t. Pixel order is row-major (v, then u), so point
clouds are reproducible byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DatasetError


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    depth_scale: float

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise DatasetError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise DatasetError("image dimensions must be positive")
        if self.depth_scale <= 0:
            raise DatasetError("depth_scale must be positive")


def quaternion_matrix(rotation: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion given as (w, x, y, z)."""
    q = np.asarray(rotation, dtype=np.float64).reshape(4)
    norm = float(np.linalg.norm(q))
    if not np.isfinite(norm) or abs(norm - 1.0) > 1e-6:
        raise DatasetError(f"rotation quaternion must be unit length, |q| = {norm}")
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def back_project(
    depth: np.ndarray,
    intrinsics: Intrinsics,
    mask: Optional[np.ndarray] = None,
    stride: int = 1,
) -> np.ndarray:
    """Lift valid depth pixels to camera-frame points; returns (n, 3) float64.

    Zero-depth pixels are skipped. With a mask, only masked pixels project;
    with a stride, only every stride-th row and column does. Points come out
    in row-major pixel order.
    """
    d = np.asarray(depth)
    if d.shape != (intrinsics.height, intrinsics.width):
        raise DatasetError(
            f"depth image is {d.shape}, expected "
            f"({intrinsics.height}, {intrinsics.width})"
        )
    if stride < 1:
        raise DatasetError("stride must be at least 1")
    select = d.astype(np.int64) > 0
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != d.shape:
            raise DatasetError("mask shape does not match depth image")
        select &= m
    if stride > 1:
        lattice = np.zeros_like(select)
        lattice[::stride, ::stride] = True
        select &= lattice
    vs, us = np.nonzero(select)
    z = d[vs, us].astype(np.float64) * intrinsics.depth_scale
    x = (us.astype(np.float64) - intrinsics.cx) * z / intrinsics.fx
    y = (vs.astype(np.float64) - intrinsics.cy) * z / intrinsics.fy
    return np.column_stack([x, y, z])


def camera_to_world(
    points: np.ndarray, translation: np.ndarray, rotation: np.ndarray
) -> np.ndarray:
    """Apply the camera pose to camera-frame points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    t = np.asarray(translation, dtype=np.float64).reshape(3)
    if not np.isfinite(t).all():
        raise DatasetError("pose translation is not finite")
    rot = quaternion_matrix(rotation)
    return pts @ rot.T + t
