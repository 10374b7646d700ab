"""Abstract map: lightweight anchors with footprints, carried-object feature
lists, and a bird's-eye occupancy layout.

Abstract maps are immutable snapshots: ``update_abstract`` returns a new map
plus a change log rather than mutating in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .concrete import ConcreteMap, MapObject
from .config import RunConfig
from .features import cosine, l2_normalize, mean_feature
from .geometry import (
    Footprint,
    PointCloud,
    containment_ratio,
    footprint,
    footprint_overlap,
    supporting_plane_z,
)

anchor_template = mean_feature  # template feature = normalized mean of static phrase features


@dataclass(frozen=True)
class Anchor:
    """Static scene element kept in the abstract map.

    Only the top-down projection of the source object survives abstraction;
    ``cloud_size`` records how many 3-D points backed it, which weights later
    feature merges.
    """

    id: int
    class_id: Optional[str]
    feature: np.ndarray
    footprint: Footprint
    support_z: Optional[float]
    cloud_size: int
    volatile_features: Tuple[np.ndarray, ...] = ()

    def with_volatiles(self, feats: Tuple[np.ndarray, ...]) -> "Anchor":
        return replace(self, volatile_features=feats)


@dataclass(frozen=True)
class OccupancyLayout:
    """Sparse BEV occupancy: occupied cells plus the known-extent bounds.

    ``bounds`` is (ix_min, iy_min, ix_max, iy_max) inclusive over every cell
    that received any point; None for an empty layout.
    """

    resolution: float
    occupied: frozenset
    bounds: Optional[Tuple[int, int, int, int]]

    @property
    def is_empty(self) -> bool:
        return self.bounds is None


@dataclass(frozen=True)
class AbstractMap:
    anchors: Dict[int, Anchor]
    layout: OccupancyLayout
    next_anchor_id: int

    def __len__(self) -> int:
        return len(self.anchors)


@dataclass
class UpdateLog:
    """Partition of the post-update anchor set by provenance."""

    merged: List[Tuple[int, float, bool]] = field(default_factory=list)  # (anchor id, overlap, volatiles replaced)
    inserted: List[int] = field(default_factory=list)
    unchanged: List[int] = field(default_factory=list)


def classify_anchor(feature: np.ndarray, template: np.ndarray, threshold: float) -> bool:
    """True when the object's feature is template-like enough to be static."""
    return cosine(feature, template) > threshold


def on_relation(obj: MapObject, anchor: Anchor, config: RunConfig) -> bool:
    """Is the (volatile) object resting on the anchor?

    Requires the anchor to expose a supporting plane, at least
    ``containment_threshold`` of the object's footprint cells to fall inside
    the anchor footprint, and the object's cloud bottom to sit within
    [0, on_distance] above the plane.
    """
    ratio = _on_relation(
        footprint(obj.cloud, config.grid_resolution), obj.cloud, anchor, config
    )
    return ratio > 0.0


def _on_relation(obj_fp: Footprint, cloud: PointCloud, anchor: Anchor, config: RunConfig) -> float:
    """Containment ratio when the on-relation holds, else 0.0."""
    if anchor.support_z is None or cloud.is_empty or obj_fp.is_empty:
        return 0.0
    lift = cloud.min_z - anchor.support_z
    if not (0.0 <= lift <= config.on_distance):
        return 0.0
    ratio = containment_ratio(obj_fp, anchor.footprint)
    if ratio < config.containment_threshold:
        return 0.0
    return ratio


def compute_layout(scene_cloud: PointCloud, resolution: float) -> OccupancyLayout:
    """BEV per-cell point counts thresholded at the 90th percentile.

    Cells whose count reaches the 90th percentile of the non-zero cell counts
    (``numpy.percentile(..., method="lower")``) are occupied. With fewer than
    10 distinct non-zero counts the threshold degenerates to the maximum
    count, so a uniform single-layer scene marks all its cells.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if scene_cloud.is_empty:
        return OccupancyLayout(resolution=resolution, occupied=frozenset(), bounds=None)
    idx = np.floor(scene_cloud.points[:, :2] / resolution).astype(np.int64)
    cells, counts = np.unique(idx, axis=0, return_counts=True)
    distinct = np.unique(counts)
    if distinct.size < 10:
        threshold = int(counts.max())
    else:
        threshold = int(np.percentile(counts, 90, method="lower"))
    occupied = frozenset(map(tuple, cells[counts >= threshold].tolist()))
    bounds = (
        int(cells[:, 0].min()),
        int(cells[:, 1].min()),
        int(cells[:, 0].max()),
        int(cells[:, 1].max()),
    )
    return OccupancyLayout(resolution=resolution, occupied=occupied, bounds=bounds)


@dataclass(frozen=True)
class _AnchorDraft:
    class_id: Optional[str]
    feature: np.ndarray
    footprint: Footprint
    support_z: Optional[float]
    cloud_size: int
    volatile_features: Tuple[np.ndarray, ...]


def _extract_anchors(cmap: ConcreteMap, template: np.ndarray, config: RunConfig) -> List[_AnchorDraft]:
    """Classify a (stability-checked) concrete map into anchor drafts.

    Volatile objects attach to the anchor they rest on (best containment,
    ties to the earlier anchor); volatiles resting on nothing are dropped —
    they have no stable reference point and would go stale anyway.
    """
    anchors: List[Tuple[MapObject, Footprint, Optional[float]]] = []
    volatiles: List[MapObject] = []
    for oid in sorted(cmap.objects):
        obj = cmap.objects[oid]
        if classify_anchor(obj.feature, template, config.anchor_threshold):
            support = supporting_plane_z(
                obj.cloud, bin_width=config.support_bin, min_points=config.support_min_points
            )
            fp = footprint(obj.cloud, config.grid_resolution, z_support=support)
            anchors.append((obj, fp, support))
        else:
            volatiles.append(obj)
    carried: List[List[np.ndarray]] = [[] for _ in anchors]
    for obj in volatiles:
        obj_fp = footprint(obj.cloud, config.grid_resolution)
        best_idx = -1
        best_ratio = 0.0
        for i, (_, fp, support) in enumerate(anchors):
            probe = Anchor(
                id=-1, class_id=None, feature=obj.feature, footprint=fp,
                support_z=support, cloud_size=0,
            )
            ratio = _on_relation(obj_fp, obj.cloud, probe, config)
            if ratio > best_ratio:
                best_ratio = ratio
                best_idx = i
        if best_idx >= 0:
            carried[best_idx].append(obj.feature)
    return [
        _AnchorDraft(
            class_id=obj.class_id,
            feature=obj.feature,
            footprint=fp,
            support_z=support,
            cloud_size=len(obj.cloud),
            volatile_features=tuple(feats),
        )
        for (obj, fp, support), feats in zip(anchors, carried)
    ]


def abstract_map(
    cmap: ConcreteMap,
    template: np.ndarray,
    scene_cloud: PointCloud,
    config: RunConfig,
) -> AbstractMap:
    """Build the abstract map from a stability-checked concrete map."""
    layout = compute_layout(scene_cloud, config.grid_resolution)
    drafts = _extract_anchors(cmap, template, config)
    anchors: Dict[int, Anchor] = {}
    for i, draft in enumerate(drafts):
        anchors[i] = Anchor(
            id=i,
            class_id=draft.class_id,
            feature=draft.feature,
            footprint=draft.footprint,
            support_z=draft.support_z,
            cloud_size=draft.cloud_size,
            volatile_features=draft.volatile_features,
        )
    return AbstractMap(anchors=anchors, layout=layout, next_anchor_id=len(drafts))


def update_abstract(
    amap: AbstractMap,
    local_map: ConcreteMap,
    template: np.ndarray,
    config: RunConfig,
) -> Tuple[AbstractMap, UpdateLog]:
    """Fold a local concrete map into the abstract map.

    Each anchor extracted from the local map merges into the existing anchor
    it overlaps most (footprint overlap ratio normalized by the smaller
    footprint) when that overlap exceeds ``merge_overlap``: footprints union,
    features combine weighted by cloud size and renormalize, cloud sizes add.
    Above ``replace_overlap`` the carried-volatile list is replaced by the
    local one (the re-observation supersedes it); otherwise the existing list
    is kept. Non-overlapping local anchors insert as new anchors. The layout
    is left untouched.
    """
    drafts = _extract_anchors(local_map, template, config)
    anchors = dict(amap.anchors)
    next_id = amap.next_anchor_id
    log = UpdateLog()
    touched: set = set()
    for draft in drafts:
        best_id: Optional[int] = None
        best_overlap = 0.0
        for aid in sorted(anchors):
            ratio = footprint_overlap(draft.footprint, anchors[aid].footprint)
            if ratio > best_overlap:
                best_overlap = ratio
                best_id = aid
        if best_id is not None and best_overlap > config.merge_overlap:
            existing = anchors[best_id]
            total = existing.cloud_size + draft.cloud_size
            feature = l2_normalize(
                (existing.cloud_size * existing.feature + draft.cloud_size * draft.feature)
                / total
            ) if total > 0 else existing.feature
            replace_list = best_overlap > config.replace_overlap
            anchors[best_id] = Anchor(
                id=existing.id,
                class_id=existing.class_id,
                feature=feature,
                footprint=existing.footprint.union(draft.footprint),
                support_z=existing.support_z if existing.support_z is not None else draft.support_z,
                cloud_size=total,
                volatile_features=(
                    draft.volatile_features if replace_list else existing.volatile_features
                ),
            )
            log.merged.append((best_id, float(best_overlap), replace_list))
            touched.add(best_id)
        else:
            anchors[next_id] = Anchor(
                id=next_id,
                class_id=draft.class_id,
                feature=draft.feature,
                footprint=draft.footprint,
                support_z=draft.support_z,
                cloud_size=draft.cloud_size,
                volatile_features=draft.volatile_features,
            )
            log.inserted.append(next_id)
            touched.add(next_id)
            next_id += 1
    log.unchanged = [aid for aid in sorted(amap.anchors) if aid not in touched]
    return AbstractMap(anchors=anchors, layout=amap.layout, next_anchor_id=next_id), log
