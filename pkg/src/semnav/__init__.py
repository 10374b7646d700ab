"""Online open-vocabulary object mapping with retrieval-guided navigation.

The package keeps two synchronized map granularities: a concrete map of fused
3-D objects with full observation histories, and a lightweight abstract map of
static anchors, their resting volatile features, and a bird's-eye occupancy
layout. Navigation retrieves candidate anchors from the abstract map, verifies
them against a locally built concrete map, and folds fresh observations back
into the abstract map between attempts. A deterministic simulator and
benchmark harness exercise the whole loop under object relocations.
"""

from .abstract import (
    AbstractMap,
    Anchor,
    OccupancyLayout,
    UpdateLog,
    abstract_map,
    classify_anchor,
    compute_layout,
    on_relation,
    update_abstract,
)
from .bench import (
    BenchmarkReport,
    BuiltScenario,
    EpisodeResult,
    ScenarioSummary,
    build_scenario_map,
    run_benchmark,
    run_scenario,
)
from .concrete import (
    AssociationReport,
    ConcreteMap,
    HistoryEntry,
    MapObject,
    SplitEvent,
    associate_frame,
    initialize,
    similarity,
    split_detection,
    stability_check,
)
from .config import RunConfig
from .errors import (
    ConfigError,
    DataError,
    MapFormatError,
    PlanningError,
    SemnavError,
    StreamFormatError,
)
from .features import (
    SyntheticVocabulary,
    as_feature,
    combine,
    cosine,
    l2_normalize,
    mean_feature,
)
from .geometry import (
    EMPTY_CLOUD,
    Footprint,
    PointCloud,
    containment_ratio,
    footprint,
    footprint_overlap,
    overlap_ratio,
    supporting_plane_z,
    voxel_downsample,
)
from .mapio import (
    load_abstract,
    load_concrete,
    load_labeled,
    load_scene,
    peek_header,
    read_episode_log,
    save_abstract,
    save_concrete,
    save_labeled,
    save_scene,
    write_episode_log,
)
from .metrics import (
    LabeledCloud,
    SegmentationReport,
    episode_succeeded,
    failure_kind,
    labeled_cloud_from_map,
    odr,
    segmentation_metrics,
    success_rate,
    transfer_labels,
)
from .navigation import (
    STRATEGIES,
    Attempt,
    NavigationEpisode,
    Query,
    anchor_score,
    confident_match,
    rank_anchors,
    retrieve_candidate,
    run_episode,
)
from .pipeline import MappingPipeline, PipelineStats, build_from_stream
from .planner import Path, PlannerGrid, plan_global, plan_local
from .sim import (
    AgentState,
    Furniture,
    Item,
    NoiseConfig,
    QuerySpec,
    RelocationEvent,
    Scenario,
    SimEpisodeWorld,
    SimWorld,
    Wall,
    drive_tour,
    load_scenario,
)
from .stream import (
    FrameRecord,
    FullFrameCloud,
    Observation,
    Pose,
    SceneCloud,
    StreamHeader,
    StreamReader,
    read_stream,
    write_stream,
    yaw_pose,
)

__version__ = "0.1.0"

__all__ = [
    "AbstractMap",
    "AgentState",
    "Anchor",
    "AssociationReport",
    "Attempt",
    "BenchmarkReport",
    "BuiltScenario",
    "ConcreteMap",
    "ConfigError",
    "DataError",
    "EMPTY_CLOUD",
    "EpisodeResult",
    "Footprint",
    "FrameRecord",
    "FullFrameCloud",
    "Furniture",
    "HistoryEntry",
    "Item",
    "LabeledCloud",
    "MapFormatError",
    "MapObject",
    "MappingPipeline",
    "NavigationEpisode",
    "NoiseConfig",
    "Observation",
    "OccupancyLayout",
    "Path",
    "PipelineStats",
    "PlannerGrid",
    "PlanningError",
    "PointCloud",
    "Pose",
    "Query",
    "QuerySpec",
    "RelocationEvent",
    "RunConfig",
    "STRATEGIES",
    "Scenario",
    "ScenarioSummary",
    "SceneCloud",
    "SegmentationReport",
    "SemnavError",
    "SimEpisodeWorld",
    "SimWorld",
    "SplitEvent",
    "StreamFormatError",
    "StreamHeader",
    "StreamReader",
    "SyntheticVocabulary",
    "UpdateLog",
    "Wall",
    "abstract_map",
    "anchor_score",
    "as_feature",
    "associate_frame",
    "build_from_stream",
    "build_scenario_map",
    "classify_anchor",
    "combine",
    "compute_layout",
    "confident_match",
    "containment_ratio",
    "cosine",
    "drive_tour",
    "episode_succeeded",
    "failure_kind",
    "footprint",
    "footprint_overlap",
    "initialize",
    "l2_normalize",
    "labeled_cloud_from_map",
    "load_abstract",
    "load_concrete",
    "load_labeled",
    "load_scenario",
    "load_scene",
    "mean_feature",
    "odr",
    "on_relation",
    "overlap_ratio",
    "peek_header",
    "plan_global",
    "plan_local",
    "rank_anchors",
    "read_episode_log",
    "read_stream",
    "retrieve_candidate",
    "run_benchmark",
    "run_episode",
    "run_scenario",
    "save_abstract",
    "save_concrete",
    "save_labeled",
    "save_scene",
    "segmentation_metrics",
    "similarity",
    "split_detection",
    "stability_check",
    "success_rate",
    "supporting_plane_z",
    "transfer_labels",
    "voxel_downsample",
    "write_episode_log",
    "write_stream",
    "yaw_pose",
]
