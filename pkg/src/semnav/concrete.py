"""Concrete object map: full clouds plus per-object observation histories.

Single-writer model: one ingest loop mutates the map; readers take
``snapshot()`` copies. Cloud and feature values themselves are immutable, so
snapshots can share them.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import (
    RunConfig,
    STABILITY_MAJORITY_DEN,
    STABILITY_MAJORITY_NUM,
)
from .features import cosine, l2_normalize
from .geometry import PointCloud, overlap_ratio, voxel_downsample
from .stream import FrameRecord, Observation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HistoryEntry:
    timestamp: int
    class_id: Optional[str]
    observation: Observation


class MapObject:
    """One mapped object: accumulated cloud, running feature mean, history.

    The exposed ``feature`` is the observation-count-weighted mean of all
    associated observation features, renormalized; internally the raw sum is
    kept so the running value matches recomputation from history exactly.
    """

    __slots__ = (
        "id", "cloud", "_feature_sum", "history", "last_update", "_class_counts",
    )

    def __init__(self, object_id: int, obs: Observation) -> None:
        self.id = object_id
        self.cloud = obs.cloud
        self._feature_sum = np.array(obs.feature, dtype=np.float64)
        self.history: List[HistoryEntry] = [
            HistoryEntry(obs.timestamp, obs.class_id, obs)
        ]
        self.last_update = obs.timestamp
        self._class_counts: Counter = Counter()
        if obs.class_id is not None:
            self._class_counts[obs.class_id] += 1

    @classmethod
    def _from_parts(
        cls, object_id: int, cloud: PointCloud, history: List[HistoryEntry]
    ) -> "MapObject":
        if not history:
            raise ValueError("an object needs at least one history entry")
        obj = cls.__new__(cls)
        obj.id = object_id
        obj.cloud = cloud
        # Sequential fold in history order: bit-identical to the incremental
        # accumulation done by merge_observation, so rebuilt objects expose
        # exactly the feature they had before serialization.
        total = np.array(history[0].observation.feature, dtype=np.float64)
        for entry in history[1:]:
            total = total + entry.observation.feature
        obj._feature_sum = total
        obj.history = list(history)
        obj.last_update = max(entry.timestamp for entry in history)
        obj._class_counts = Counter(
            entry.class_id for entry in history if entry.class_id is not None
        )
        return obj

    @property
    def feature(self) -> np.ndarray:
        return l2_normalize(self._feature_sum)

    @property
    def observation_count(self) -> int:
        return len(self.history)

    @property
    def class_id(self) -> Optional[str]:
        """Most frequent non-null history class; ties -> smaller name."""
        if not self._class_counts:
            return None
        return min(self._class_counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]

    def majority_count(self) -> int:
        if not self._class_counts:
            return 0
        return max(self._class_counts.values())

    def merge_observation(self, obs: Observation, voxel: float) -> None:
        self.cloud = voxel_downsample(self.cloud.merged(obs.cloud), voxel)
        self._feature_sum = self._feature_sum + obs.feature
        self.history.append(HistoryEntry(obs.timestamp, obs.class_id, obs))
        self.last_update = obs.timestamp
        if obs.class_id is not None:
            self._class_counts[obs.class_id] += 1

    def copy(self) -> "MapObject":
        twin = MapObject.__new__(MapObject)
        twin.id = self.id
        twin.cloud = self.cloud
        twin._feature_sum = self._feature_sum.copy()
        twin.history = list(self.history)
        twin.last_update = self.last_update
        twin._class_counts = Counter(self._class_counts)
        return twin


class ConcreteMap:
    """Ordered id -> MapObject registry; ids are never reused."""

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        self.objects: Dict[int, MapObject] = {}
        self._next_id = 0
        self.last_frame_id = -1

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self):
        return iter(self.objects.values())

    @property
    def next_object_id(self) -> int:
        return self._next_id

    @next_object_id.setter
    def next_object_id(self, value: int) -> None:
        if self.objects and value <= max(self.objects):
            raise ValueError("next object id must exceed every existing id")
        self._next_id = value

    def new_object(self, obs: Observation) -> MapObject:
        obj = MapObject(self._next_id, obs)
        self.objects[obj.id] = obj
        self._next_id += 1
        return obj

    def adopt(self, cloud: PointCloud, history: List[HistoryEntry]) -> MapObject:
        obj = MapObject._from_parts(self._next_id, cloud, history)
        self.objects[obj.id] = obj
        self._next_id += 1
        return obj

    def snapshot(self) -> "ConcreteMap":
        twin = ConcreteMap(self.config)
        twin.objects = {oid: obj.copy() for oid, obj in self.objects.items()}
        twin._next_id = self._next_id
        twin.last_frame_id = self.last_frame_id
        return twin


@dataclass
class AssociationReport:
    """Outcome of one frame's data association."""

    frame_id: int
    matches: List[Tuple[int, int, float]] = field(default_factory=list)  # (obs idx, object id, score)
    created: List[Tuple[int, int]] = field(default_factory=list)         # (obs idx, object id)


@dataclass(frozen=True)
class SplitEvent:
    source_id: int
    new_ids: Dict[str, int]  # class -> new object id


def similarity(obs: Observation, obj: MapObject, radius: float) -> float:
    """Association score: feature cosine plus cloud overlap, range [-1, 2]."""
    return cosine(obs.feature, obj.feature) + overlap_ratio(obs.cloud, obj.cloud, radius).ratio


def initialize(frame: FrameRecord, config: RunConfig) -> ConcreteMap:
    """Fresh map seeded with one object per observation of the first frame."""
    cmap = ConcreteMap(config)
    for obs in frame.observations:
        cmap.new_object(obs)
    cmap.last_frame_id = frame.frame_id
    return cmap


def associate_frame(cmap: ConcreteMap, frame: FrameRecord) -> AssociationReport:
    """Greedy per-observation association against the live map.

    Observations are processed in frame order; each scores against every
    current object (including ones created earlier in the same frame) and
    merges into the argmax when the score strictly exceeds the match
    threshold, otherwise spawns a new object. Equal best scores resolve to the
    lower object id. Several observations of one frame may hit the same object.
    """
    if frame.frame_id <= cmap.last_frame_id:
        raise ValueError(
            f"frame {frame.frame_id} not newer than last ingested {cmap.last_frame_id}"
        )
    radius = cmap.config.effective_overlap_radius
    threshold = cmap.config.match_threshold
    report = AssociationReport(frame_id=frame.frame_id)
    for obs_idx, obs in enumerate(frame.observations):
        best_id: Optional[int] = None
        best_score = -np.inf
        for oid, obj in cmap.objects.items():  # insertion order == ascending id
            score = similarity(obs, obj, radius)
            if score > best_score:
                best_score = score
                best_id = oid
        if best_id is not None and best_score > threshold:
            cmap.objects[best_id].merge_observation(obs, cmap.config.voxel)
            report.matches.append((obs_idx, best_id, float(best_score)))
        else:
            obj = cmap.new_object(obs)
            report.created.append((obs_idx, obj.id))
    cmap.last_frame_id = frame.frame_id
    return report


def stability_check(cmap: ConcreteMap, now: int) -> List[int]:
    """Drop under-observed or class-inconsistent idle objects.

    Objects whose last update lies at least ``stability_window`` frames in the
    past are evaluated: they stay only with at least ``stability_min_obs``
    history entries AND a most-frequent class covering at least two thirds of
    all entries (null classes count in the denominator only). Returns removed
    ids. Recently updated objects are untouched.
    """
    config = cmap.config
    removed: List[int] = []
    for oid in list(cmap.objects):
        obj = cmap.objects[oid]
        if now - obj.last_update < config.stability_window:
            continue
        total = obj.observation_count
        majority_ok = (
            obj.majority_count() * STABILITY_MAJORITY_DEN
            >= total * STABILITY_MAJORITY_NUM
        )
        if total >= config.stability_min_obs and majority_ok:
            continue
        del cmap.objects[oid]
        removed.append(oid)
    if removed:
        log.debug("stability check at %d removed %s", now, removed)
    return removed


def split_detection(cmap: ConcreteMap) -> List[SplitEvent]:
    """Split objects whose histories show persistent same-frame class conflicts.

    Trigger: at least two distinct non-null classes observed at the same
    timestamp, at ``split_persistence`` or more distinct timestamps. The
    history is partitioned by class into new objects (cloud = union of that
    class's observation clouds, downsampled; feature = weighted mean of that
    class's features). Null-class entries join the largest partition so no
    observation is orphaned. The source object is removed.
    """
    config = cmap.config
    events: List[SplitEvent] = []
    for oid in list(cmap.objects):
        obj = cmap.objects[oid]
        classes_at: Dict[int, set] = {}
        for entry in obj.history:
            if entry.class_id is not None:
                classes_at.setdefault(entry.timestamp, set()).add(entry.class_id)
        conflicts = sum(1 for classes in classes_at.values() if len(classes) >= 2)
        if conflicts < config.split_persistence:
            continue
        partitions: Dict[str, List[HistoryEntry]] = {}
        nulls: List[HistoryEntry] = []
        for entry in obj.history:
            if entry.class_id is None:
                nulls.append(entry)
            else:
                partitions.setdefault(entry.class_id, []).append(entry)
        if nulls:
            host = min(partitions, key=lambda c: (-len(partitions[c]), c))
            partitions[host].extend(nulls)
            partitions[host].sort(key=lambda e: e.timestamp)
        del cmap.objects[oid]
        new_ids: Dict[str, int] = {}
        for cls in sorted(partitions):
            entries = partitions[cls]
            cloud = PointCloud()
            for entry in entries:
                cloud = cloud.merged(entry.observation.cloud)
            cloud = voxel_downsample(cloud, config.voxel)
            new_obj = cmap.adopt(cloud, entries)
            new_ids[cls] = new_obj.id
        events.append(SplitEvent(source_id=oid, new_ids=new_ids))
        log.debug("split object %d into %s", oid, new_ids)
    return events
