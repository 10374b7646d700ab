"""Deterministic synthetic worlds for mapping and navigation benchmarks.

Worlds are 2D floor plans (wall segments, rectangular furniture with top
heights, small box items resting on furniture) sensed by a range- and
FOV-limited agent. Everything an agent perceives is a pure function of
(world, agent pose, tick, seed): observation point sets, features, noise
injections, and full-frame structure clouds are all seeded, so streams and
benchmarks replay bit-identically.

Heights exist only where the mapping stack needs them: furniture tops carry
items (the "on" relation), walls always occlude, and furniture occludes only
when taller than the sensor. Navigation itself is planar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .errors import DataError
from .features import SyntheticVocabulary, l2_normalize
from .geometry import PointCloud
from .stream import FrameRecord, FullFrameCloud, Observation, yaw_pose

SENSOR_HEIGHT = 1.2
ITEM_SIDE = 0.16
ITEM_HEIGHT = 0.12
# Items float a hair above their carrier top so carrier and item clouds never
# fall within one voxel of each other, yet stay well inside the on-relation
# height tolerance.
ITEM_REST_GAP = 0.06
FURNITURE_TOP_POINTS = 30
FURNITURE_SIDE_POINTS = 20
ITEM_POINTS = 50
SPURIOUS_POINTS = 12

GtRef = Tuple[str, int]  # ("furniture" | "item" | "spurious", id)


# --- world model ------------------------------------------------------------


@dataclass(frozen=True)
class Wall:
    x1: float
    y1: float
    x2: float
    y2: float
    height: float = 2.5

    def __post_init__(self) -> None:
        if math.hypot(self.x2 - self.x1, self.y2 - self.y1) < 1e-9:
            raise DataError("degenerate wall segment")
        if self.height <= 0:
            raise DataError("wall height must be positive")


@dataclass(frozen=True)
class Furniture:
    id: int
    class_id: str
    cx: float
    cy: float
    width: float
    depth: float
    top: float

    def __post_init__(self) -> None:
        if self.width <= 0 or self.depth <= 0 or self.top <= 0:
            raise DataError(f"furniture {self.id}: non-positive extent")

    @property
    def x_min(self) -> float:
        return self.cx - self.width / 2

    @property
    def x_max(self) -> float:
        return self.cx + self.width / 2

    @property
    def y_min(self) -> float:
        return self.cy - self.depth / 2

    @property
    def y_max(self) -> float:
        return self.cy + self.depth / 2

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass
class Item:
    """A movable box item; carrier None means it sits on the floor."""

    id: int
    class_id: str
    carrier: Optional[int]
    offset: Tuple[float, float]  # relative to carrier center (or absolute on floor)


@dataclass(frozen=True)
class RelocationEvent:
    time: int
    item_id: int
    carrier: Optional[int]
    offset: Tuple[float, float]
    kind: str  # in_anchor | cross_anchor

    def __post_init__(self) -> None:
        if self.kind not in ("in_anchor", "cross_anchor"):
            raise DataError(f"unknown relocation kind {self.kind!r}")


@dataclass(frozen=True)
class UndersegmentSpec:
    """Emit a single merged observation for two objects until a tick."""

    ref_a: GtRef
    ref_b: GtRef
    until_tick: int


@dataclass(frozen=True)
class NoiseConfig:
    spurious_rate: float = 0.0
    drop_rate: float = 0.0
    null_rate: float = 0.0
    undersegment: Tuple[UndersegmentSpec, ...] = ()

    def __post_init__(self) -> None:
        for name in ("spurious_rate", "drop_rate", "null_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DataError(f"{name} must be within [0, 1], got {value}")


@dataclass(frozen=True)
class TruthSegment:
    kind: str
    gt_id: int
    class_id: Optional[str]
    count: int


@dataclass(frozen=True)
class ObservationTruth:
    """Ground-truth provenance of one emitted observation, in point order."""

    segments: Tuple[TruthSegment, ...]


@dataclass
class AgentState:
    x: float
    y: float
    heading: float = 0.0
    fov: float = math.tau
    range: float = 4.0
    step: float = 0.25

    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)


def _segments_intersect(
    p1: Tuple[float, float],
    p2: Tuple[float, float],
    q1: Tuple[float, float],
    q2: Tuple[float, float],
) -> bool:
    def orient(a, b, c) -> float:
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True

    def on_segment(a, b, c) -> bool:
        return (
            min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
            and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12
        )

    if d1 == 0 and on_segment(q1, q2, p1):
        return True
    if d2 == 0 and on_segment(q1, q2, p2):
        return True
    if d3 == 0 and on_segment(p1, p2, q1):
        return True
    if d4 == 0 and on_segment(p1, p2, q2):
        return True
    return False


def _segment_hits_rect(
    p1: Tuple[float, float], p2: Tuple[float, float], furn: Furniture
) -> bool:
    if furn.contains(*p1) or furn.contains(*p2):
        return True
    corners = (
        (furn.x_min, furn.y_min),
        (furn.x_max, furn.y_min),
        (furn.x_max, furn.y_max),
        (furn.x_min, furn.y_max),
    )
    edges = tuple(zip(corners, corners[1:] + corners[:1]))
    return any(_segments_intersect(p1, p2, a, b) for a, b in edges)


class SimWorld:
    """Static structure plus movable items, with seeded sensing."""

    def __init__(
        self,
        walls: Sequence[Wall],
        furniture: Sequence[Furniture],
        items: Sequence[Item],
        seed: int,
        noise: NoiseConfig = NoiseConfig(),
    ) -> None:
        if not walls and not furniture:
            raise DataError("world needs at least one wall or furniture piece")
        self.walls = tuple(walls)
        self.furniture: Dict[int, Furniture] = {}
        for f in furniture:
            if f.id in self.furniture:
                raise DataError(f"duplicate furniture id {f.id}")
            self.furniture[f.id] = f
        self.items: Dict[int, Item] = {}
        for it in items:
            if it.id in self.items:
                raise DataError(f"duplicate item id {it.id}")
            self.items[it.id] = it
        self.seed = int(seed)
        self.noise = noise
        self._static_points: Optional[np.ndarray] = None
        for it in self.items.values():
            self._validate_item(it)

    # --- static structure ---

    def bounds(self) -> Tuple[float, float, float, float]:
        xs: List[float] = []
        ys: List[float] = []
        for w in self.walls:
            xs.extend((w.x1, w.x2))
            ys.extend((w.y1, w.y2))
        for f in self.furniture.values():
            xs.extend((f.x_min, f.x_max))
            ys.extend((f.y_min, f.y_max))
        return (min(xs), min(ys), max(xs), max(ys))

    def carrier_top(self, carrier: Optional[int]) -> float:
        if carrier is None:
            return 0.0
        if carrier not in self.furniture:
            raise DataError(f"unknown carrier furniture id {carrier}")
        return self.furniture[carrier].top

    def item_base(self, item: Item) -> Tuple[float, float, float]:
        """World (x, y, bottom_z) of an item's box center axis."""
        if item.carrier is None:
            return (item.offset[0], item.offset[1], ITEM_REST_GAP)
        furn = self.furniture[item.carrier]
        return (
            furn.cx + item.offset[0],
            furn.cy + item.offset[1],
            furn.top + ITEM_REST_GAP,
        )

    def item_position(self, item_id: int) -> Tuple[float, float]:
        x, y, _ = self.item_base(self.items[item_id])
        return (x, y)

    def _validate_item(self, item: Item) -> None:
        if item.carrier is None:
            return
        if item.carrier not in self.furniture:
            raise DataError(f"item {item.id}: unknown carrier {item.carrier}")
        furn = self.furniture[item.carrier]
        x, y, _ = self.item_base(item)
        half = ITEM_SIDE / 2
        if not (
            furn.x_min + half <= x <= furn.x_max - half
            and furn.y_min + half <= y <= furn.y_max - half
        ):
            raise DataError(
                f"item {item.id} does not fit on furniture {item.carrier} at offset {item.offset}"
            )

    def apply_events(self, events: Sequence[RelocationEvent]) -> None:
        for event in sorted(events, key=lambda e: (e.time, e.item_id)):
            if event.item_id not in self.items:
                raise DataError(f"relocation references unknown item {event.item_id}")
            item = self.items[event.item_id]
            same_carrier = event.carrier == item.carrier
            if same_carrier != (event.kind == "in_anchor"):
                raise DataError(
                    f"relocation of item {event.item_id} marked {event.kind} but carrier "
                    f"{'is unchanged' if same_carrier else 'changes'}"
                )
            item.carrier = event.carrier
            item.offset = (float(event.offset[0]), float(event.offset[1]))
            self._validate_item(item)

    # --- full-frame structure cloud (walls + furniture, no floor) ---

    def _build_static_points(self) -> np.ndarray:
        """Structure cloud with one canonical point pattern per layout cell.

        Rasterizes walls and furniture onto the 0.1 m layout grid first, then
        emits a fixed 12-point pattern inside every touched cell (walls: 2
        columns x 6 heights; furniture: 4 columns x 3 depths below the top).
        Equal per-cell counts make the layout's percentile threshold land on
        exactly the structural cells, with no corner or partial-cell tiers.
        """
        res = 0.1
        probe = res / 4
        wall_heights = np.array([0.225, 0.475, 0.725, 0.975, 1.225, 1.475])

        wall_cells: Dict[Tuple[int, int], float] = {}
        for w in self.walls:
            length = math.hypot(w.x2 - w.x1, w.y2 - w.y1)
            n = max(2, int(math.ceil(length / probe)) + 1)
            t = np.linspace(0.0, 1.0, n)
            xs = w.x1 + t * (w.x2 - w.x1)
            ys = w.y1 + t * (w.y2 - w.y1)
            for cx, cy in zip(
                np.floor(xs / res).astype(np.int64), np.floor(ys / res).astype(np.int64)
            ):
                key = (int(cx), int(cy))
                wall_cells[key] = max(wall_cells.get(key, 0.0), w.height)

        furniture_cells: Dict[Tuple[int, int], float] = {}
        for f in sorted(self.furniture.values(), key=lambda f: f.id):
            nx = max(2, int(math.ceil(f.width / probe)) + 1)
            ny = max(2, int(math.ceil(f.depth / probe)) + 1)
            gx = np.linspace(f.x_min, f.x_max, nx)
            gy = np.linspace(f.y_min, f.y_max, ny)
            for cx in np.unique(np.floor(gx / res).astype(np.int64)):
                for cy in np.unique(np.floor(gy / res).astype(np.int64)):
                    key = (int(cx), int(cy))
                    if key in wall_cells:
                        continue
                    furniture_cells[key] = max(furniture_cells.get(key, 0.0), f.top)

        pts: List[Tuple[float, float, float]] = []
        for (cx, cy), height in sorted(wall_cells.items()):
            heights = wall_heights[wall_heights <= height]
            if len(heights) == 0:
                heights = np.array([height / 2])
            for ox, oy in ((0.025, 0.025), (0.075, 0.075)):
                x = cx * res + ox
                y = cy * res + oy
                for z in heights:
                    pts.append((x, y, float(z)))
        for (cx, cy), top in sorted(furniture_cells.items()):
            depths = [top - d for d in (0.025, 0.075, 0.125) if top - d > 0]
            for ox, oy in ((0.025, 0.025), (0.025, 0.075), (0.075, 0.025), (0.075, 0.075)):
                x = cx * res + ox
                y = cy * res + oy
                for z in depths:
                    pts.append((x, y, z))
        if not pts:
            return np.empty((0, 3))
        return np.array(pts, dtype=np.float64)

    def static_points(self) -> np.ndarray:
        if self._static_points is None:
            self._static_points = self._build_static_points()
            self._static_points.setflags(write=False)
        return self._static_points

    def full_frame_cloud(self, agent: AgentState, tick: int) -> FullFrameCloud:
        pts = self.static_points()
        dx = pts[:, 0] - agent.x
        dy = pts[:, 1] - agent.y
        mask = dx * dx + dy * dy <= agent.range**2
        if agent.fov < math.tau - 1e-9:
            angles = np.arctan2(dy, dx)
            diff = np.abs(_angle_diff_array(angles, agent.heading))
            mask &= diff <= agent.fov / 2
        return FullFrameCloud(frame_id=tick, cloud=PointCloud(pts[mask]))

    # --- visibility ---

    def _occluded(self, eye: Tuple[float, float], target: Tuple[float, float], ref: GtRef) -> bool:
        for w in self.walls:
            if _segments_intersect(eye, target, (w.x1, w.y1), (w.x2, w.y2)):
                return True
        exempt = {ref}
        if ref[0] == "item":
            carrier = self.items[ref[1]].carrier
            if carrier is not None:
                exempt.add(("furniture", carrier))
        for f in self.furniture.values():
            if f.top < SENSOR_HEIGHT or ("furniture", f.id) in exempt:
                continue
            if _segment_hits_rect(eye, target, f):
                return True
        return False

    def _in_view(self, agent: AgentState, target: Tuple[float, float], ref: GtRef) -> bool:
        dx = target[0] - agent.x
        dy = target[1] - agent.y
        if math.hypot(dx, dy) > agent.range:
            return False
        if agent.fov < math.tau - 1e-9:
            if abs(_angle_diff(math.atan2(dy, dx), agent.heading)) > agent.fov / 2:
                return False
        return not self._occluded(agent.position(), target, ref)

    def visible_refs(self, agent: AgentState) -> List[GtRef]:
        refs: List[GtRef] = []
        for fid in sorted(self.furniture):
            f = self.furniture[fid]
            if self._in_view(agent, (f.cx, f.cy), ("furniture", fid)):
                refs.append(("furniture", fid))
        for iid in sorted(self.items):
            x, y, _ = self.item_base(self.items[iid])
            if self._in_view(agent, (x, y), ("item", iid)):
                refs.append(("item", iid))
        return refs

    # --- observation sampling ---

    def _furniture_points(self, furn: Furniture, tick: int) -> np.ndarray:
        rng = np.random.default_rng(
            np.random.SeedSequence((self.seed, tick, 1, furn.id))
        )
        top = np.column_stack(
            [
                rng.uniform(furn.x_min, furn.x_max, FURNITURE_TOP_POINTS),
                rng.uniform(furn.y_min, furn.y_max, FURNITURE_TOP_POINTS),
                np.full(FURNITURE_TOP_POINTS, furn.top),
            ]
        )
        # Side faces chosen by perimeter-length weighting.
        lengths = np.array([furn.width, furn.width, furn.depth, furn.depth])
        faces = rng.choice(4, size=FURNITURE_SIDE_POINTS, p=lengths / lengths.sum())
        u = rng.uniform(0.0, 1.0, FURNITURE_SIDE_POINTS)
        z = rng.uniform(0.0, furn.top, FURNITURE_SIDE_POINTS)
        xs = np.where(
            faces < 2,
            furn.x_min + u * furn.width,
            np.where(faces == 2, furn.x_min, furn.x_max),
        )
        ys = np.where(
            faces >= 2,
            furn.y_min + u * furn.depth,
            np.where(faces == 0, furn.y_min, furn.y_max),
        )
        sides = np.column_stack([xs, ys, z])
        return np.concatenate([top, sides], axis=0)

    def _item_points(self, item: Item, tick: int) -> np.ndarray:
        rng = np.random.default_rng(
            np.random.SeedSequence((self.seed, tick, 2, item.id))
        )
        x, y, z0 = self.item_base(item)
        half = ITEM_SIDE / 2
        # Faces: top plus four sides, area-weighted.
        top_area = ITEM_SIDE * ITEM_SIDE
        side_area = ITEM_SIDE * ITEM_HEIGHT
        areas = np.array([top_area] + [side_area] * 4)
        faces = rng.choice(5, size=ITEM_POINTS, p=areas / areas.sum())
        u = rng.uniform(-half, half, ITEM_POINTS)
        v = rng.uniform(0.0, 1.0, ITEM_POINTS)
        pts = np.empty((ITEM_POINTS, 3))
        for i, face in enumerate(faces):
            if face == 0:
                pts[i] = (x + u[i], y + v[i] * ITEM_SIDE - half, z0 + ITEM_HEIGHT)
            elif face == 1:
                pts[i] = (x + u[i], y - half, z0 + v[i] * ITEM_HEIGHT)
            elif face == 2:
                pts[i] = (x + u[i], y + half, z0 + v[i] * ITEM_HEIGHT)
            elif face == 3:
                pts[i] = (x - half, y + u[i], z0 + v[i] * ITEM_HEIGHT)
            else:
                pts[i] = (x + half, y + u[i], z0 + v[i] * ITEM_HEIGHT)
        return pts

    def _instance_seed(self, ref: GtRef) -> int:
        return ref[1] if ref[0] == "item" else 10_000 + ref[1]

    def instance_feature(self, ref: GtRef, vocab: SyntheticVocabulary) -> np.ndarray:
        """The exact embedding sensing emits for this object, for queries."""
        cls = (
            self.items[ref[1]].class_id
            if ref[0] == "item"
            else self.furniture[ref[1]].class_id
        )
        return vocab.embed(cls, self._instance_seed(ref))

    def _ref_class(self, ref: GtRef) -> str:
        if ref[0] == "item":
            return self.items[ref[1]].class_id
        return self.furniture[ref[1]].class_id

    def _ref_points(self, ref: GtRef, tick: int) -> np.ndarray:
        if ref[0] == "item":
            return self._item_points(self.items[ref[1]], tick)
        return self._furniture_points(self.furniture[ref[1]], tick)

    def sense(
        self, agent: AgentState, vocab: SyntheticVocabulary, tick: int
    ) -> Tuple[FrameRecord, Tuple[ObservationTruth, ...]]:
        """One seeded sensing pass; returns the frame plus GT provenance."""
        noise_rng = np.random.default_rng(
            np.random.SeedSequence((self.seed, tick, 3))
        )
        refs = self.visible_refs(agent)
        kept: List[GtRef] = []
        for ref in refs:
            if self.noise.drop_rate > 0.0 and noise_rng.random() < self.noise.drop_rate:
                continue
            kept.append(ref)

        merged_away: Dict[GtRef, UndersegmentSpec] = {}
        for spec in self.noise.undersegment:
            if tick < spec.until_tick and spec.ref_a in kept and spec.ref_b in kept:
                merged_away[spec.ref_a] = spec
                merged_away[spec.ref_b] = spec

        observations: List[Observation] = []
        truths: List[ObservationTruth] = []
        emitted_specs: set = set()
        for ref in kept:
            if ref in merged_away:
                spec = merged_away[ref]
                if id(spec) in emitted_specs:
                    continue
                emitted_specs.add(id(spec))
                pts_a = self._ref_points(spec.ref_a, tick)
                pts_b = self._ref_points(spec.ref_b, tick)
                side = spec.ref_a if tick % 2 == 0 else spec.ref_b
                cls = self._ref_class(side)
                # one crop over both objects: stable blended embedding while
                # the classifier flip-flops between the two labels
                feature = l2_normalize(
                    vocab.embed(self._ref_class(spec.ref_a), self._instance_seed(spec.ref_a))
                    + vocab.embed(self._ref_class(spec.ref_b), self._instance_seed(spec.ref_b))
                )
                class_id: Optional[str] = cls
                if self.noise.null_rate > 0.0 and noise_rng.random() < self.noise.null_rate:
                    class_id = None
                observations.append(
                    Observation(
                        cloud=PointCloud(np.concatenate([pts_a, pts_b], axis=0)),
                        feature=feature,
                        class_id=class_id,
                        timestamp=tick,
                    )
                )
                truths.append(
                    ObservationTruth(
                        segments=(
                            TruthSegment(
                                spec.ref_a[0],
                                spec.ref_a[1],
                                self._ref_class(spec.ref_a),
                                len(pts_a),
                            ),
                            TruthSegment(
                                spec.ref_b[0],
                                spec.ref_b[1],
                                self._ref_class(spec.ref_b),
                                len(pts_b),
                            ),
                        )
                    )
                )
                continue
            pts = self._ref_points(ref, tick)
            cls = self._ref_class(ref)
            feature = vocab.embed(cls, self._instance_seed(ref))
            class_id = cls
            if self.noise.null_rate > 0.0 and noise_rng.random() < self.noise.null_rate:
                class_id = None
            observations.append(
                Observation(
                    cloud=PointCloud(pts),
                    feature=feature,
                    class_id=class_id,
                    timestamp=tick,
                )
            )
            truths.append(
                ObservationTruth(
                    segments=(TruthSegment(ref[0], ref[1], cls, len(pts)),)
                )
            )

        if self.noise.spurious_rate > 0.0 and noise_rng.random() < self.noise.spurious_rate:
            x_min, y_min, x_max, y_max = self.bounds()
            center = np.array(
                [
                    noise_rng.uniform(x_min, x_max),
                    noise_rng.uniform(y_min, y_max),
                    noise_rng.uniform(0.2, 1.4),
                ]
            )
            blob = center + noise_rng.normal(0.0, 0.05, (SPURIOUS_POINTS, 3))
            feature = l2_normalize(noise_rng.standard_normal(vocab.dim))
            observations.append(
                Observation(
                    cloud=PointCloud(blob), feature=feature, class_id=None, timestamp=tick
                )
            )
            truths.append(
                ObservationTruth(
                    segments=(TruthSegment("spurious", -1, None, SPURIOUS_POINTS),)
                )
            )

        frame = FrameRecord(
            frame_id=tick,
            pose=yaw_pose(agent.x, agent.y, SENSOR_HEIGHT, agent.heading),
            observations=tuple(observations),
        )
        return frame, tuple(truths)


def _angle_diff(a: float, b: float) -> float:
    d = (a - b) % math.tau
    if d > math.pi:
        d -= math.tau
    return d


def _angle_diff_array(a: np.ndarray, b: float) -> np.ndarray:
    d = (a - b) % math.tau
    return np.where(d > math.pi, d - math.tau, d)


# --- agent drivers ----------------------------------------------------------


TickCallback = Callable[
    [int, AgentState, FrameRecord, FullFrameCloud, Tuple[ObservationTruth, ...]], None
]


def drive_tour(
    world: SimWorld,
    agent: AgentState,
    waypoints: Sequence[Tuple[float, float]],
    vocab: SyntheticVocabulary,
    on_tick: TickCallback,
    start_tick: int = 0,
) -> int:
    """Walk the agent through waypoints at its stride, sensing every tick.

    Senses once at the start pose, then once per step. Returns the next
    unused tick.
    """
    tick = start_tick

    def emit() -> None:
        nonlocal tick
        frame, truths = world.sense(agent, vocab, tick)
        full = world.full_frame_cloud(agent, tick)
        on_tick(tick, agent, frame, full, truths)
        tick += 1

    emit()
    for wx, wy in waypoints:
        while True:
            dx = wx - agent.x
            dy = wy - agent.y
            dist = math.hypot(dx, dy)
            if dist <= 1e-9:
                break
            if dist <= agent.step:
                agent.x, agent.y = wx, wy
            else:
                agent.x += dx / dist * agent.step
                agent.y += dy / dist * agent.step
            agent.heading = math.atan2(dy, dx)
            emit()
    return tick


class SimEpisodeWorld:
    """Adapter giving navigation episodes a stepping view of a SimWorld."""

    def __init__(
        self,
        world: SimWorld,
        agent: AgentState,
        vocab: SyntheticVocabulary,
        start_tick: int,
    ) -> None:
        self.world = world
        self.agent = agent
        self.vocab = vocab
        self.tick = start_tick

    def position(self) -> Tuple[float, float]:
        return (self.agent.x, self.agent.y)

    def _sense(self) -> FrameRecord:
        frame, _ = self.world.sense(self.agent, self.vocab, self.tick)
        self.tick += 1
        return frame

    def step_toward(self, target: Tuple[float, float]) -> FrameRecord:
        dx = target[0] - self.agent.x
        dy = target[1] - self.agent.y
        dist = math.hypot(dx, dy)
        if dist > 1e-12:
            self.agent.heading = math.atan2(dy, dx)
            if dist <= self.agent.step:
                self.agent.x, self.agent.y = target
            else:
                self.agent.x += dx / dist * self.agent.step
                self.agent.y += dy / dist * self.agent.step
        return self._sense()

    def scan(self) -> FrameRecord:
        return self._sense()


# --- scenario files ---------------------------------------------------------


@dataclass(frozen=True)
class QuerySpec:
    item_id: int
    text: str


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    vocabulary: SyntheticVocabulary
    world: SimWorld
    agent: AgentState
    tour: Tuple[Tuple[float, float], ...]
    relocations: Tuple[RelocationEvent, ...]
    queries: Tuple[QuerySpec, ...]

    def query_kind(self, item_id: int) -> str:
        """static, in_anchor, or cross_anchor, from the last event on the item."""
        kind = "static"
        for event in sorted(self.relocations, key=lambda e: (e.time, e.item_id)):
            if event.item_id == item_id:
                kind = event.kind
        return kind


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise DataError(f"scenario {context}: missing required key {key!r}")
    return mapping[key]


def load_scenario(source: Union[str, Path, dict]) -> Scenario:
    """Parse a scenario file (YAML mapping) into a ready-to-run Scenario."""
    if isinstance(source, (str, Path)):
        try:
            with open(source, "r", encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise DataError(f"scenario {source}: unparseable YAML: {exc}") from exc
        context = str(source)
    else:
        raw = source
        context = "<dict>"
    if not isinstance(raw, dict):
        raise DataError(f"scenario {context}: top level must be a mapping")

    name = str(raw.get("name", "unnamed"))
    seed = int(raw.get("seed", 0))

    vspec = _require(raw, "vocabulary", context)
    vocab = SyntheticVocabulary(
        classes=tuple(_require(vspec, "classes", context)),
        seed=int(vspec.get("seed", 0)),
        dim=int(vspec.get("dim", 512)),
        static_classes=tuple(vspec.get("static_classes", ())),
        noise_scale=float(vspec.get("noise_scale", 0.05)),
        similarity_ceiling=float(vspec.get("similarity_ceiling", 0.6)),
        static_strength=float(vspec.get("static_strength", 0.7)),
    )

    wspec = _require(raw, "world", context)
    walls = [Wall(*[float(v) for v in seg]) for seg in wspec.get("walls", [])]
    furniture = []
    for f in wspec.get("furniture", []):
        rect = _require(f, "rect", context)
        furniture.append(
            Furniture(
                id=int(_require(f, "id", context)),
                class_id=str(_require(f, "class", context)),
                cx=float(rect[0]),
                cy=float(rect[1]),
                width=float(rect[2]),
                depth=float(rect[3]),
                top=float(_require(f, "top", context)),
            )
        )
    items = []
    for it in wspec.get("items", []):
        carrier = it.get("carrier")
        offset = _require(it, "offset", context)
        items.append(
            Item(
                id=int(_require(it, "id", context)),
                class_id=str(_require(it, "class", context)),
                carrier=None if carrier is None else int(carrier),
                offset=(float(offset[0]), float(offset[1])),
            )
        )

    nspec = raw.get("noise", {}) or {}
    undersegment = []
    for u in nspec.get("undersegment", []):
        a = _require(u, "a", context)
        b = _require(u, "b", context)
        undersegment.append(
            UndersegmentSpec(
                ref_a=(str(a["kind"]), int(a["id"])),
                ref_b=(str(b["kind"]), int(b["id"])),
                until_tick=int(_require(u, "until", context)),
            )
        )
    noise = NoiseConfig(
        spurious_rate=float(nspec.get("spurious_rate", 0.0)),
        drop_rate=float(nspec.get("drop_rate", 0.0)),
        null_rate=float(nspec.get("null_rate", 0.0)),
        undersegment=tuple(undersegment),
    )

    world = SimWorld(walls, furniture, items, seed=seed, noise=noise)

    for f in world.furniture.values():
        if f.class_id not in vocab.classes:
            raise DataError(f"scenario {context}: unknown class {f.class_id!r}")
    for it in world.items.values():
        if it.class_id not in vocab.classes:
            raise DataError(f"scenario {context}: unknown class {it.class_id!r}")

    aspec = _require(raw, "agent", context)
    start = _require(aspec, "start", context)
    agent = AgentState(
        x=float(start[0]),
        y=float(start[1]),
        heading=float(aspec.get("heading", 0.0)),
        fov=math.radians(float(aspec.get("fov_deg", 360.0))),
        range=float(aspec.get("range", 4.0)),
        step=float(aspec.get("step", 0.25)),
    )

    tour = tuple((float(w[0]), float(w[1])) for w in _require(raw, "tour", context))

    relocations = []
    for r in raw.get("relocations", []):
        carrier = r.get("carrier")
        offset = _require(r, "offset", context)
        relocations.append(
            RelocationEvent(
                time=int(r.get("time", 0)),
                item_id=int(_require(r, "item", context)),
                carrier=None if carrier is None else int(carrier),
                offset=(float(offset[0]), float(offset[1])),
                kind=str(_require(r, "kind", context)),
            )
        )

    queries = tuple(
        QuerySpec(item_id=int(_require(q, "item", context)), text=str(q.get("text", "")))
        for q in raw.get("queries", [])
    )
    for q in queries:
        if q.item_id not in world.items:
            raise DataError(f"scenario {context}: query references unknown item {q.item_id}")

    return Scenario(
        name=name,
        seed=seed,
        vocabulary=vocab,
        world=world,
        agent=agent,
        tour=tour,
        relocations=tuple(relocations),
        queries=queries,
    )
