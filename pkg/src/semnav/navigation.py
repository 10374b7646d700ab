"""Query-driven retrieval and the navigation episode state machine.

An episode retrieves the best-scoring anchor for a query, walks a global
route toward it while mapping en route into a fresh local concrete map, and
tests each nearby frame for a confident match. Failed attempts exclude the
anchor, optionally fold the local map back into the abstract map, and retry
until the attempt limit. The world is abstracted behind a tiny stepping
protocol so the simulator (or any replay source) can drive episodes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Set, Tuple

import numpy as np

from .abstract import AbstractMap, Anchor, update_abstract
from .concrete import ConcreteMap, MapObject, associate_frame, stability_check
from .config import RunConfig
from .errors import PlanningError
from .features import as_feature, cosine, l2_normalize
from .geometry import containment_ratio, footprint
from .planner import Path, PlannerGrid, plan_global, plan_local
from .stream import FrameRecord

log = logging.getLogger(__name__)

STRATEGIES = ("updated", "stale", "random")

EventSink = Callable[[Dict[str, object]], None]


@dataclass(frozen=True)
class Query:
    """A retrieval query: a unit feature vector plus the original text."""

    feature: np.ndarray
    text: str = ""

    def __post_init__(self) -> None:
        vec = l2_normalize(as_feature(self.feature))
        object.__setattr__(self, "feature", vec)


def anchor_score(query: Query, anchor: Anchor) -> float:
    """Best cosine between the query and the anchor or any of its volatiles."""
    best = cosine(query.feature, anchor.feature)
    for vol in anchor.volatile_features:
        best = max(best, cosine(query.feature, vol))
    return float(best)


def rank_anchors(
    query: Query, amap: AbstractMap, excluded: Set[int] = frozenset()
) -> List[Tuple[int, float]]:
    """All non-excluded anchors as (id, score), best first, ties by lower id."""
    scored = [
        (aid, anchor_score(query, anchor))
        for aid, anchor in sorted(amap.anchors.items())
        if aid not in excluded
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored


def retrieve_candidate(
    query: Query, amap: AbstractMap, excluded: Set[int] = frozenset()
) -> Optional[Tuple[int, float]]:
    """Highest-scoring anchor outside ``excluded``; None when all excluded."""
    ranked = rank_anchors(query, amap, excluded)
    return ranked[0] if ranked else None


def confident_match(
    query: Query,
    local: ConcreteMap,
    anchor: Anchor,
    pinned_score: float,
    config: RunConfig,
) -> Optional[MapObject]:
    """Best local-map object passing the score margin and footprint gates.

    An object qualifies when cosine(feature, query) >= pinned_score - margin
    and its footprint lies at least ``containment_threshold`` inside the
    anchor's footprint. Highest cosine wins; ties go to the lower object id.
    """
    threshold = pinned_score - config.score_margin
    resolution = anchor.footprint.resolution
    best: Optional[MapObject] = None
    best_cos = -math.inf
    for oid in sorted(local.objects):
        obj = local.objects[oid]
        score = cosine(query.feature, obj.feature)
        if score < threshold:
            continue
        fp = footprint(obj.cloud, resolution)
        if fp.is_empty:
            continue
        if containment_ratio(fp, anchor.footprint) < config.containment_threshold:
            continue
        if score > best_cos:
            best = obj
            best_cos = score
    return best


# --- episode state machine --------------------------------------------------


class EpisodeWorld(Protocol):
    """Minimal world surface an episode needs.

    The world owns the agent's stride and the sensing clock; ``step_toward``
    advances at most one stride toward the target (clamping onto it when
    closer than a stride) and returns the frame sensed at the new position.
    """

    def position(self) -> Tuple[float, float]: ...

    def step_toward(self, target: Tuple[float, float]) -> FrameRecord: ...

    def scan(self) -> FrameRecord: ...


@dataclass(frozen=True)
class Attempt:
    anchor_id: int
    score: float
    outcome: str  # matched | no_match | match_unreachable | planning_failure
    global_path_length: float = 0.0
    local_path_length: float = 0.0
    end_position: Tuple[float, float] = (0.0, 0.0)
    matched_centroid: Optional[Tuple[float, float]] = None

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "anchor_id": self.anchor_id,
            "score": self.score,
            "outcome": self.outcome,
            "global_path_length": self.global_path_length,
            "local_path_length": self.local_path_length,
            "end_position": list(self.end_position),
            "matched_centroid": (
                None if self.matched_centroid is None else list(self.matched_centroid)
            ),
        }

    @classmethod
    def from_json_dict(cls, data: Dict[str, object]) -> "Attempt":
        centroid = data.get("matched_centroid")
        return cls(
            anchor_id=int(data["anchor_id"]),
            score=float(data["score"]),
            outcome=str(data["outcome"]),
            global_path_length=float(data.get("global_path_length", 0.0)),
            local_path_length=float(data.get("local_path_length", 0.0)),
            end_position=tuple(data.get("end_position", (0.0, 0.0))),
            matched_centroid=None if centroid is None else tuple(centroid),
        )


@dataclass(frozen=True)
class NavigationEpisode:
    query_text: str
    strategy: str
    attempt_limit: int
    pinned_score: float
    attempts: Tuple[Attempt, ...]
    status: str  # success | exhausted | planning_failure
    final_position: Tuple[float, float]
    claimed_position: Optional[Tuple[float, float]]
    seed: int

    @property
    def success(self) -> bool:
        return self.status == "success"

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "query_text": self.query_text,
            "strategy": self.strategy,
            "attempt_limit": self.attempt_limit,
            "pinned_score": self.pinned_score,
            "attempts": [a.to_json_dict() for a in self.attempts],
            "status": self.status,
            "final_position": list(self.final_position),
            "claimed_position": (
                None if self.claimed_position is None else list(self.claimed_position)
            ),
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, data: Dict[str, object]) -> "NavigationEpisode":
        claimed = data.get("claimed_position")
        return cls(
            query_text=str(data["query_text"]),
            strategy=str(data["strategy"]),
            attempt_limit=int(data["attempt_limit"]),
            pinned_score=float(data["pinned_score"]),
            attempts=tuple(Attempt.from_json_dict(a) for a in data["attempts"]),
            status=str(data["status"]),
            final_position=tuple(data["final_position"]),
            claimed_position=None if claimed is None else tuple(claimed),
            seed=int(data.get("seed", 0)),
        )


def _distance(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _select(
    strategy: str,
    query: Query,
    amap: AbstractMap,
    excluded: Set[int],
    rng: np.random.Generator,
) -> Optional[Tuple[int, float]]:
    if strategy == "random":
        candidates = sorted(aid for aid in amap.anchors if aid not in excluded)
        if not candidates:
            return None
        aid = int(candidates[int(rng.integers(len(candidates)))])
        return aid, anchor_score(query, amap.anchors[aid])
    return retrieve_candidate(query, amap, excluded)


def _centroid_xy(obj: MapObject) -> Tuple[float, float]:
    c = obj.cloud.centroid()
    return (float(c[0]), float(c[1]))


def _stable_snapshot(local: ConcreteMap, config: RunConfig) -> ConcreteMap:
    """Copy of the local map with the stability filter force-applied.

    Everything is treated as idle so under-observed or class-inconsistent
    en-route objects never reach the abstract map.
    """
    snap = local.snapshot()
    forced_now = snap.last_frame_id + config.stability_window
    stability_check(snap, forced_now)
    return snap


def run_episode(
    query: Query,
    amap: AbstractMap,
    world: EpisodeWorld,
    config: RunConfig,
    template: Optional[np.ndarray] = None,
    strategy: str = "updated",
    seed: int = 0,
    event_sink: Optional[EventSink] = None,
) -> Tuple[NavigationEpisode, AbstractMap]:
    """Run one navigation episode; returns the episode and the abstract map.

    ``strategy`` picks the candidate-selection policy: "updated" folds the
    en-route local map back into the abstract map after every failed attempt
    so later retrievals see relocations; "stale" retrieves from the input map
    unchanged; "random" picks uniformly among unattempted anchors. The
    returned map differs from the input only under "updated". The pinned
    score from attempt 1 gates confident matches for the whole episode.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if strategy == "updated" and template is None:
        raise ValueError("strategy 'updated' requires a static-class template feature")
    if not amap.anchors:
        raise ValueError("abstract map has no anchors to retrieve from")

    emit: EventSink = event_sink if event_sink is not None else (lambda event: None)
    rng = np.random.default_rng(seed)
    grid = PlannerGrid(amap.layout, config.inflation)
    working = amap
    local = ConcreteMap(config)
    attempted: Set[int] = set()
    attempts: List[Attempt] = []
    pinned: Optional[float] = None
    status = "exhausted"
    claimed: Optional[Tuple[float, float]] = None

    emit({"event": "episode_start", "query": query.text, "strategy": strategy, "seed": seed})

    def ingest(frame: FrameRecord) -> None:
        associate_frame(local, frame)
        emit(
            {
                "event": "frame",
                "frame_id": frame.frame_id,
                "observations": len(frame.observations),
                "local_objects": len(local.objects),
            }
        )

    def walk_and_match(
        path: Path, anchor: Anchor
    ) -> Optional[MapObject]:
        center = anchor.footprint.center()
        for waypoint in path.waypoints:
            guard = int(_distance(world.position(), waypoint) / 0.01) + 64
            while _distance(world.position(), waypoint) > 1e-9:
                frame = world.step_toward(waypoint)
                ingest(frame)
                if _distance(world.position(), center) < config.near_anchor_distance:
                    match = confident_match(query, local, anchor, pinned, config)
                    if match is not None:
                        return match
                guard -= 1
                if guard <= 0:
                    raise RuntimeError("world failed to converge onto a waypoint")
        # Arrival scan: one extra in-place frame before giving up.
        frame = world.scan()
        ingest(frame)
        return confident_match(query, local, anchor, pinned, config)

    def walk_plain(path: Path) -> None:
        for waypoint in path.waypoints:
            guard = int(_distance(world.position(), waypoint) / 0.01) + 64
            while _distance(world.position(), waypoint) > 1e-9:
                ingest(world.step_toward(waypoint))
                guard -= 1
                if guard <= 0:
                    raise RuntimeError("world failed to converge onto a waypoint")

    for attempt_index in range(config.attempt_limit):
        pick = _select(strategy, query, working, attempted, rng)
        if pick is None:
            break
        anchor_id, score = pick
        if pinned is None:
            pinned = score
        anchor = working.anchors[anchor_id]
        attempted.add(anchor_id)
        emit(
            {
                "event": "attempt_start",
                "attempt": attempt_index,
                "anchor_id": anchor_id,
                "score": score,
                "pinned_score": pinned,
            }
        )

        outcome = "no_match"
        global_length = 0.0
        local_length = 0.0
        matched_centroid: Optional[Tuple[float, float]] = None
        try:
            global_path = plan_global(grid, world.position(), anchor.footprint)
        except PlanningError as exc:
            log.warning("global planning failed: %s", exc)
            global_path = None
        if global_path is None:
            outcome = "planning_failure"
            emit({"event": "plan_global", "attempt": attempt_index, "ok": False})
        else:
            global_length = global_path.length
            emit(
                {
                    "event": "plan_global",
                    "attempt": attempt_index,
                    "ok": True,
                    "length": global_path.length,
                    "waypoints": [list(w) for w in global_path.waypoints],
                }
            )
            match = walk_and_match(global_path, anchor)
            if match is not None:
                matched_centroid = _centroid_xy(match)
                emit(
                    {
                        "event": "match",
                        "attempt": attempt_index,
                        "object_id": match.id,
                        "cosine": cosine(query.feature, match.feature),
                        "centroid": list(matched_centroid),
                    }
                )
                here = grid.component_of(grid.cell_of(world.position()))
                goal_cell = grid.nearest_free_cell(matched_centroid, component=here)
                local_path = None
                if goal_cell is not None:
                    try:
                        local_path = plan_local(
                            grid,
                            world.position(),
                            grid.center_of(goal_cell),
                            budget=config.rrt_budget,
                            seed=seed * 100 + attempt_index,
                            step=config.rrt_step,
                            goal_bias=config.rrt_goal_bias,
                            early_exit_ratio=config.rrt_early_exit_ratio,
                        )
                    except PlanningError as exc:
                        log.warning("local planning failed: %s", exc)
                emit(
                    {
                        "event": "plan_local",
                        "attempt": attempt_index,
                        "ok": local_path is not None,
                        "length": 0.0 if local_path is None else local_path.length,
                    }
                )
                if local_path is None:
                    outcome = "planning_failure"
                else:
                    local_length = local_path.length
                    walk_plain(local_path)
                    if _distance(world.position(), matched_centroid) <= config.success_radius:
                        outcome = "matched"
                        status = "success"
                        claimed = matched_centroid
                    else:
                        outcome = "match_unreachable"

        attempts.append(
            Attempt(
                anchor_id=anchor_id,
                score=score,
                outcome=outcome,
                global_path_length=global_length,
                local_path_length=local_length,
                end_position=world.position(),
                matched_centroid=matched_centroid,
            )
        )
        emit(
            {
                "event": "attempt_end",
                "attempt": attempt_index,
                "outcome": outcome,
                "position": list(world.position()),
            }
        )
        if status == "success":
            break
        if strategy == "updated" and len(local.objects) > 0:
            stable = _stable_snapshot(local, config)
            working, update_log = update_abstract(working, stable, template, config)
            emit(
                {
                    "event": "map_update",
                    "attempt": attempt_index,
                    "merged": len(update_log.merged),
                    "inserted": len(update_log.inserted),
                    "unchanged": len(update_log.unchanged),
                }
            )

    if status != "success" and attempts and all(
        a.outcome == "planning_failure" for a in attempts
    ):
        status = "planning_failure"

    episode = NavigationEpisode(
        query_text=query.text,
        strategy=strategy,
        attempt_limit=config.attempt_limit,
        pinned_score=0.0 if pinned is None else float(pinned),
        attempts=tuple(attempts),
        status=status,
        final_position=world.position(),
        claimed_position=claimed,
        seed=seed,
    )
    emit(
        {
            "event": "episode_end",
            "status": status,
            "final_position": list(episode.final_position),
            "claimed_position": None if claimed is None else list(claimed),
            "attempts": len(attempts),
        }
    )
    return episode, working
