"""Runtime configuration: one flat dataclass, YAML-loadable, echoed to outputs."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .errors import ConfigError

# Fraction of history entries the most frequent class must reach for an object
# to be considered stable. Fixed by the stability rule, checked in integer
# arithmetic (count * 3 >= total * 2), not configurable.
STABILITY_MAJORITY_NUM = 2
STABILITY_MAJORITY_DEN = 3


@dataclass
class RunConfig:
    """All tunable knobs, with their pinned defaults.

    Distances are meters, angles degrees, budgets iteration counts.
    """

    # feature space
    dim: int = 512
    image_weight: float = 0.7
    text_weight: float = 0.3

    # clouds and association
    voxel: float = 0.05                 # map-cloud downsample cell; also the overlap radius default
    overlap_radius: Optional[float] = None  # None -> use voxel
    min_obs_points: int = 10
    match_threshold: float = 1.05       # feature cosine + cloud overlap must exceed this to merge

    # scene cloud / keyframes
    scene_voxel: float = 0.05
    keyframe_translation: float = 1.0
    keyframe_rotation_deg: float = 20.0

    # stability and splitting
    stability_window: int = 20
    stability_min_obs: int = 5
    split_persistence: int = 3          # distinct timestamps with class conflicts before a split

    # abstraction
    anchor_threshold: float = 0.6       # template cosine above which an object becomes an anchor
    grid_resolution: float = 0.1        # footprints and occupancy layout share this grid
    on_distance: float = 0.1            # max height of a volatile's bottom above the support plane
    containment_threshold: float = 0.6  # fraction of volatile cells inside the anchor footprint
    merge_overlap: float = 0.3          # footprint overlap above which anchors merge
    replace_overlap: float = 0.7        # ... above which the volatile list is replaced wholesale
    support_bin: float = 0.05
    support_min_points: int = 50

    # retrieval and navigation
    score_margin: float = 0.05          # confident-match slack below the pinned retrieval score
    attempt_limit: int = 3
    success_radius: float = 1.0
    near_anchor_distance: float = 3.0

    # planner
    inflation: float = 0.2
    rrt_budget: int = 5000
    rrt_step: float = 0.3
    rrt_goal_bias: float = 0.05
    rrt_early_exit_ratio: Optional[float] = None  # stop refining once cost/straight-line <= ratio

    seed: int = 0

    def __post_init__(self) -> None:
        self.validate()

    @property
    def effective_overlap_radius(self) -> float:
        return self.voxel if self.overlap_radius is None else self.overlap_radius

    def validate(self) -> None:
        positive = [
            "dim", "voxel", "min_obs_points", "scene_voxel", "keyframe_translation",
            "keyframe_rotation_deg", "stability_window", "stability_min_obs",
            "split_persistence", "grid_resolution", "on_distance", "support_bin",
            "support_min_points", "attempt_limit", "success_radius",
            "near_anchor_distance", "rrt_budget", "rrt_step",
        ]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ["image_weight", "text_weight", "score_margin", "inflation"]:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.image_weight + self.text_weight <= 0:
            raise ConfigError("image_weight + text_weight must be positive")
        if self.overlap_radius is not None and self.overlap_radius <= 0:
            raise ConfigError("overlap_radius must be positive when set")
        for name in ["containment_threshold", "merge_overlap", "replace_overlap", "rrt_goal_bias"]:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if not -1.0 <= self.anchor_threshold <= 1.0:
            raise ConfigError(
                f"anchor_threshold is a cosine, must lie in [-1, 1], got {self.anchor_threshold}"
            )
        if self.rrt_early_exit_ratio is not None and self.rrt_early_exit_ratio < 1.0:
            raise ConfigError("rrt_early_exit_ratio must be >= 1.0 when set")

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return dataclasses.replace(self, **dict(overrides))

    def to_dict(self) -> dict:
        """Plain-dict form with stable key order, for output-file headers."""
        raw = dataclasses.asdict(self)
        return {k: raw[k] for k in sorted(raw)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        return cls().with_overrides(data)

    @classmethod
    def from_file(cls, path: "str | Path") -> "RunConfig":
        text = Path(path).read_text()
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path}: unparseable YAML: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        return cls.from_dict(data)
