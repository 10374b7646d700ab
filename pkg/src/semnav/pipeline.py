"""Online mapping pipeline: frames in, concrete map + scene cloud out.

Wires the per-frame loop together: greedy association into the concrete map,
the stability and split checks after every frame, and keyframe-gated scene
cloud accumulation for the layout. Collects counters and wall-clock timing so
callers can report throughput.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

from .concrete import (
    ConcreteMap,
    associate_frame,
    split_detection,
    stability_check,
)
from .config import RunConfig
from .stream import FrameRecord, FullFrameCloud, Pose, SceneCloud, StreamItem


@dataclass
class PipelineStats:
    frames: int = 0
    observations: int = 0
    matched: int = 0
    created: int = 0
    removed_by_stability: int = 0
    splits: int = 0
    keyframes: int = 0
    processing_seconds: float = 0.0

    @property
    def seconds_per_frame(self) -> float:
        return self.processing_seconds / self.frames if self.frames else 0.0

    @property
    def frames_per_second(self) -> float:
        return self.frames / self.processing_seconds if self.processing_seconds else 0.0

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "observations": self.observations,
            "matched": self.matched,
            "created": self.created,
            "removed_by_stability": self.removed_by_stability,
            "splits": self.splits,
            "keyframes": self.keyframes,
            "processing_seconds": self.processing_seconds,
            "seconds_per_frame": self.seconds_per_frame,
        }


class MappingPipeline:
    """Single-writer online mapping loop over a stream of items."""

    def __init__(
        self,
        config: RunConfig,
        enable_stability: bool = True,
        enable_split: bool = True,
    ) -> None:
        self.config = config
        self.enable_stability = enable_stability
        self.enable_split = enable_split
        self.cmap = ConcreteMap(config)
        self.scene = SceneCloud(voxel=config.scene_voxel)
        self.stats = PipelineStats()
        self._last_pose: Optional[Pose] = None
        self._last_frame_id: Optional[int] = None
        self._finalized = False

    def ingest(self, item: StreamItem) -> None:
        if self._finalized:
            raise RuntimeError("pipeline already finalized")
        start = time.perf_counter()
        if isinstance(item, FrameRecord):
            self._ingest_frame(item)
        elif isinstance(item, FullFrameCloud):
            self._ingest_full_cloud(item)
        else:
            raise TypeError(f"unsupported stream item {type(item).__name__}")
        self.stats.processing_seconds += time.perf_counter() - start

    def _ingest_frame(self, frame: FrameRecord) -> None:
        report = associate_frame(self.cmap, frame)
        self.stats.frames += 1
        self.stats.observations += len(frame.observations)
        self.stats.matched += len(report.matches)
        self.stats.created += len(report.created)
        self._last_pose = frame.pose
        self._last_frame_id = frame.frame_id
        if self.enable_stability:
            removed = stability_check(self.cmap, frame.frame_id)
            self.stats.removed_by_stability += len(removed)
        if self.enable_split:
            events = split_detection(self.cmap)
            self.stats.splits += len(events)

    def _ingest_full_cloud(self, item: FullFrameCloud) -> None:
        if self._last_pose is None or self._last_frame_id != item.frame_id:
            # Structure clouds bind to the pose of their own frame; without it
            # the cloud cannot be placed on the keyframe timeline.
            raise ValueError(
                f"full-frame cloud for frame {item.frame_id} arrived before its frame record"
            )
        before = self.scene
        self.scene = self.scene.update(
            self._last_pose,
            item.cloud,
            self.config.keyframe_translation,
            self.config.keyframe_rotation_deg,
        )
        if self.scene is not before:
            self.stats.keyframes += 1

    def finalize(self) -> Tuple[ConcreteMap, SceneCloud, PipelineStats]:
        """Final split pass, then a forced stability sweep over everything.

        Splitting first recovers real objects hiding inside under-segmented
        ones; the forced sweep (every object treated as idle) then drops what
        never earned enough consistent observations.
        """
        if not self._finalized:
            self._finalized = True
            if self.enable_split:
                events = split_detection(self.cmap)
                self.stats.splits += len(events)
            if self.enable_stability and self.cmap.last_frame_id >= 0:
                forced_now = self.cmap.last_frame_id + self.config.stability_window
                removed = stability_check(self.cmap, forced_now)
                self.stats.removed_by_stability += len(removed)
        return self.cmap, self.scene, self.stats


def build_from_stream(
    items: Iterable[StreamItem],
    config: RunConfig,
    enable_stability: bool = True,
    enable_split: bool = True,
) -> Tuple[ConcreteMap, SceneCloud, PipelineStats]:
    """Run the full pipeline over an item iterable and finalize."""
    pipeline = MappingPipeline(
        config, enable_stability=enable_stability, enable_split=enable_split
    )
    for item in items:
        pipeline.ingest(item)
    return pipeline.finalize()
