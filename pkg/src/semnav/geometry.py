"""Point-cloud containers and planar geometry primitives.

World frame is right-handed with Z up; all lengths are meters. Clouds are
immutable so they can be shared across readers and cache derived structures
(KD-tree, bounds) safely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree


class PointCloud:
    """Immutable (N, 3) float64 point set."""

    __slots__ = ("_points", "_tree", "_aabb")

    def __init__(self, points: object = None) -> None:
        if points is None:
            pts = np.empty((0, 3), dtype=np.float64)
        else:
            pts = np.asarray(points, dtype=np.float64)
            if pts.size == 0:
                pts = pts.reshape(0, 3)
            if pts.ndim != 2 or pts.shape[1] != 3:
                raise ValueError(f"expected (N, 3) points, got shape {pts.shape}")
            if not np.isfinite(pts).all():
                raise ValueError("point cloud contains non-finite coordinates")
        pts = np.ascontiguousarray(pts, dtype=np.float64)
        pts.setflags(write=False)
        self._points = pts
        self._tree: Optional[cKDTree] = None
        self._aabb: Optional[np.ndarray] = None

    @property
    def points(self) -> np.ndarray:
        return self._points

    def __len__(self) -> int:
        return int(self._points.shape[0])

    @property
    def is_empty(self) -> bool:
        return self._points.shape[0] == 0

    @property
    def min_z(self) -> float:
        if self.is_empty:
            raise ValueError("empty cloud has no minimum height")
        return float(self._points[:, 2].min())

    def centroid(self) -> np.ndarray:
        if self.is_empty:
            raise ValueError("empty cloud has no centroid")
        return self._points.mean(axis=0)

    def aabb(self) -> np.ndarray:
        """Axis-aligned bounds as a (2, 3) [min; max] array."""
        if self._aabb is None:
            if self.is_empty:
                raise ValueError("empty cloud has no bounding box")
            self._aabb = np.stack([self._points.min(axis=0), self._points.max(axis=0)])
        return self._aabb

    def kdtree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self._points)
        return self._tree

    def merged(self, other: "PointCloud") -> "PointCloud":
        if self.is_empty:
            return other
        if other.is_empty:
            return self
        return PointCloud(np.vstack([self._points, other._points]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self._points.shape == other._points.shape and bool(
            np.array_equal(self._points, other._points)
        )

    def __hash__(self) -> int:  # identity hash; clouds are compared explicitly
        return id(self)

    def __repr__(self) -> str:
        return f"PointCloud(n={len(self)})"


EMPTY_CLOUD = PointCloud()


class OverlapResult(NamedTuple):
    """Overlap ratio plus a flag marking degenerate (empty-input) results."""

    ratio: float
    degenerate: bool = False


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """Replace all points falling in one voxel cell by their centroid.

    Cells are half-open cubes aligned to the origin: index = floor(p / voxel).
    Output points are ordered by cell index, so the result is deterministic for
    a fixed input ordering and idempotent (each centroid stays in its cell).
    """
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    if cloud.is_empty:
        return cloud
    idx = np.floor(cloud.points / voxel).astype(np.int64)
    order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))
    sorted_idx = idx[order]
    sorted_pts = cloud.points[order]
    changed = np.any(np.diff(sorted_idx, axis=0) != 0, axis=1)
    starts = np.concatenate([[0], np.flatnonzero(changed) + 1])
    sums = np.add.reduceat(sorted_pts, starts, axis=0)
    counts = np.diff(np.concatenate([starts, [len(sorted_pts)]]))
    return PointCloud(sums / counts[:, None])


def overlap_ratio(a: PointCloud, b: PointCloud, radius: float) -> OverlapResult:
    """Fraction of the smaller cloud's points with a neighbor in the other cloud.

    A point counts when its nearest neighbor in the other cloud lies at
    distance <= radius. Normalizing by the smaller cloud keeps the ratio
    meaningful when a partial view is compared against an accumulated model.
    Either cloud empty -> ratio 0.0, flagged degenerate.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if a.is_empty or b.is_empty:
        return OverlapResult(0.0, degenerate=True)
    probe, other = (a, b) if len(a) <= len(b) else (b, a)
    # AABB gap larger than radius means no pair can be in range.
    lo = np.maximum(probe.aabb()[0], other.aabb()[0])
    hi = np.minimum(probe.aabb()[1], other.aabb()[1])
    if np.any(lo - hi > radius):
        return OverlapResult(0.0)
    dist, _ = other.kdtree().query(probe.points, k=1)
    hits = int(np.count_nonzero(dist <= radius))
    return OverlapResult(hits / len(probe))


def supporting_plane_z(
    cloud: PointCloud, bin_width: float = 0.05, min_points: int = 50
) -> Optional[float]:
    """Estimate the height of a horizontal supporting surface.

    Histograms point heights at ``bin_width`` and picks the highest-count bin
    among bins whose lower edge lies at or above the cloud's vertical midpoint
    (suppresses floors under furniture). Returns the upper edge of that bin,
    or None when no bin holds at least ``min_points`` points. Equal-count bins
    resolve to the lowest one.
    """
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    if min_points < 1:
        raise ValueError("min_points must be at least 1")
    if len(cloud) < min_points:
        return None
    z = cloud.points[:, 2]
    z_min = float(z.min())
    z_max = float(z.max())
    n_bins = max(1, int(np.ceil((z_max - z_min) / bin_width - 1e-12)))
    edges = z_min + np.arange(n_bins + 1, dtype=np.float64) * bin_width
    counts, _ = np.histogram(z, bins=edges)
    midpoint = 0.5 * (z_min + z_max)
    eligible = edges[:-1] >= midpoint - 1e-12
    if not eligible.any():
        return None
    masked = np.where(eligible, counts, -1)
    best = int(np.argmax(masked))
    if counts[best] < min_points:
        return None
    return float(edges[best + 1])


@dataclass(frozen=True)
class Footprint:
    """Occupied XY grid cells of a cloud projected top-down.

    ``cells`` holds (ix, iy) indices at ``resolution`` meters per cell;
    ``z_support`` optionally records the supporting-plane height extracted
    from the source cloud.
    """

    cells: frozenset
    resolution: float
    z_support: Optional[float] = None

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def is_empty(self) -> bool:
        return not self.cells

    def center(self) -> np.ndarray:
        """Mean of occupied cell centers, in world coordinates."""
        if not self.cells:
            raise ValueError("empty footprint has no center")
        arr = np.array(sorted(self.cells), dtype=np.float64)
        return (arr.mean(axis=0) + 0.5) * self.resolution

    def union(self, other: "Footprint") -> "Footprint":
        _check_resolution(self, other)
        return Footprint(
            cells=self.cells | other.cells,
            resolution=self.resolution,
            z_support=self.z_support if self.z_support is not None else other.z_support,
        )


def footprint(cloud: PointCloud, resolution: float, z_support: Optional[float] = None) -> Footprint:
    """Project a cloud to its occupied XY cells at the given resolution."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if cloud.is_empty:
        return Footprint(cells=frozenset(), resolution=resolution, z_support=z_support)
    idx = np.floor(cloud.points[:, :2] / resolution).astype(np.int64)
    cells = frozenset(map(tuple, np.unique(idx, axis=0).tolist()))
    return Footprint(cells=cells, resolution=resolution, z_support=z_support)


def _check_resolution(a: Footprint, b: Footprint) -> None:
    if abs(a.resolution - b.resolution) > 1e-12:
        raise ValueError(
            f"footprint resolution mismatch: {a.resolution} vs {b.resolution}"
        )


def containment_ratio(inner: Footprint, outer: Footprint) -> float:
    """|inner ∩ outer| / |inner|; 0.0 when inner is empty."""
    _check_resolution(inner, outer)
    if not inner.cells:
        return 0.0
    return len(inner.cells & outer.cells) / len(inner.cells)


def footprint_overlap(a: Footprint, b: Footprint) -> float:
    """Planar analog of overlap_ratio: |a ∩ b| normalized by the smaller footprint."""
    _check_resolution(a, b)
    if not a.cells or not b.cells:
        return 0.0
    return len(a.cells & b.cells) / min(len(a.cells), len(b.cells))
