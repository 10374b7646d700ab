"""Grid planners over the occupancy layout.

Global routes follow the free-space Voronoi skeleton (ridge of the distance
transform, extracted by grid thinning) and are fully deterministic. Local
approach paths come from a seeded RRT* with shrinking-ball rewiring. Both
planners are pure functions of immutable inputs; ``PlannerGrid`` precomputes
the inflated occupancy once and is shared read-only.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from skimage.morphology import medial_axis

from .abstract import OccupancyLayout
from .errors import PlanningError
from .geometry import Footprint

_SQRT2 = math.sqrt(2.0)
# 8-connected neighborhood, fixed order for deterministic tie-breaking.
_NEIGHBORS = (
    (-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1),
)


@dataclass(frozen=True)
class Path:
    """Waypoints in world coordinates plus the polyline length."""

    waypoints: Tuple[Tuple[float, float], ...]
    length: float

    def __len__(self) -> int:
        return len(self.waypoints)


def _polyline_length(points: Sequence[Tuple[float, float]]) -> float:
    total = 0.0
    for a, b in zip(points, points[1:]):
        total += math.hypot(b[0] - a[0], b[1] - a[1])
    return total


class PlannerGrid:
    """Inflated occupancy raster derived from an OccupancyLayout.

    Cells outside the layout bounds count as blocked: the planner never sends
    the agent beyond observed space. Cell (ix, iy) covers
    [ix*res, (ix+1)*res) x [iy*res, (iy+1)*res); array axes are [x][y].
    """

    def __init__(self, layout: OccupancyLayout, inflation: float, margin_cells: int = 2) -> None:
        if layout.is_empty:
            raise PlanningError("cannot plan on an empty layout")
        self.resolution = layout.resolution
        self.inflation = inflation
        ix_min, iy_min, ix_max, iy_max = layout.bounds
        self.origin = (ix_min - margin_cells, iy_min - margin_cells)
        nx = ix_max - ix_min + 1 + 2 * margin_cells
        ny = iy_max - iy_min + 1 + 2 * margin_cells
        occupied = np.zeros((nx, ny), dtype=bool)
        for cx, cy in layout.occupied:
            occupied[cx - self.origin[0], cy - self.origin[1]] = True
        # Margin ring marks the unknown outside world as blocked.
        occupied[:margin_cells, :] = True
        occupied[-margin_cells:, :] = True
        occupied[:, :margin_cells] = True
        occupied[:, -margin_cells:] = True
        self.raw_occupied = occupied
        # Distance (meters) from each cell center to the nearest occupied cell center.
        self.clearance = ndimage.distance_transform_edt(~occupied) * self.resolution
        self.free = self.clearance > inflation
        self._skeleton: Optional[np.ndarray] = None
        self._components: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.raw_occupied.shape

    def skeleton(self) -> np.ndarray:
        """Free-space Voronoi skeleton (thinned distance-transform ridge)."""
        if self._skeleton is None:
            # fixed rng: tie-pixel removal order must not vary between builds
            self._skeleton = medial_axis(self.free, rng=0)
        return self._skeleton

    def component_of(self, cell: Tuple[int, int]) -> int:
        """Connected-component label of a free cell (0 for blocked cells).

        Layout artifacts can leave unreachable free pockets inside obstacle
        rings; goal selection filters on the start's component to avoid them.
        """
        if self._components is None:
            labels, _ = ndimage.label(self.free, structure=np.ones((3, 3), dtype=bool))
            self._components = labels
        if not self.in_grid(cell):
            return 0
        return int(self._components[cell])

    # --- coordinate helpers ---

    def cell_of(self, xy: Sequence[float]) -> Tuple[int, int]:
        return (
            int(math.floor(xy[0] / self.resolution)) - self.origin[0],
            int(math.floor(xy[1] / self.resolution)) - self.origin[1],
        )

    def center_of(self, cell: Tuple[int, int]) -> Tuple[float, float]:
        return (
            (cell[0] + self.origin[0] + 0.5) * self.resolution,
            (cell[1] + self.origin[1] + 0.5) * self.resolution,
        )

    def in_grid(self, cell: Tuple[int, int]) -> bool:
        return 0 <= cell[0] < self.shape[0] and 0 <= cell[1] < self.shape[1]

    def is_free_cell(self, cell: Tuple[int, int]) -> bool:
        return self.in_grid(cell) and bool(self.free[cell])

    def is_free_point(self, xy: Sequence[float]) -> bool:
        return self.is_free_cell(self.cell_of(xy))

    def segment_free(self, a: Sequence[float], b: Sequence[float]) -> bool:
        """Dense interpolation collision test at sub-cell spacing."""
        ax, ay = float(a[0]), float(a[1])
        bx, by = float(b[0]), float(b[1])
        dist = math.hypot(bx - ax, by - ay)
        steps = max(1, int(math.ceil(dist / (self.resolution * 0.25))))
        t = np.linspace(0.0, 1.0, steps + 1)
        cx = np.floor((ax + t * (bx - ax)) / self.resolution).astype(np.int64) - self.origin[0]
        cy = np.floor((ay + t * (by - ay)) / self.resolution).astype(np.int64) - self.origin[1]
        inside = (cx >= 0) & (cx < self.shape[0]) & (cy >= 0) & (cy < self.shape[1])
        if not inside.all():
            return False
        return bool(self.free[cx, cy].all())

    def nearest_free_cell(
        self,
        xy: Sequence[float],
        max_radius: Optional[float] = None,
        component: Optional[int] = None,
    ) -> Optional[Tuple[int, int]]:
        """BFS outward from xy to the closest acceptable free cell.

        ``component`` restricts candidates to one free-space component so a
        caller can demand reachability from its own position. Ties go to the
        candidate whose center is nearest xy, then lexicographic.
        """
        start = self.cell_of(xy)

        def acceptable(cell: Tuple[int, int]) -> bool:
            if not self.free[cell]:
                return False
            return component is None or self.component_of(cell) == component

        if self.in_grid(start) and acceptable(start):
            return start
        if not self.in_grid(start):
            return None
        best: Optional[Tuple[int, int]] = None
        seen = {start}
        frontier = [start]
        while frontier and best is None:
            nxt: List[Tuple[int, int]] = []
            for cell in frontier:
                for dx, dy in _NEIGHBORS:
                    nb = (cell[0] + dx, cell[1] + dy)
                    if nb in seen or not self.in_grid(nb):
                        continue
                    seen.add(nb)
                    nxt.append(nb)
            candidates = [c for c in nxt if acceptable(c)]
            if candidates:
                center = np.array(xy, dtype=np.float64)
                best = min(
                    candidates,
                    key=lambda c: (
                        float(np.linalg.norm(np.array(self.center_of(c)) - center)),
                        c,
                    ),
                )
            frontier = nxt
        if best is None:
            return None
        if max_radius is not None:
            cx, cy = self.center_of(best)
            if math.hypot(cx - xy[0], cy - xy[1]) > max_radius:
                return None
        return best


# --- global planner -------------------------------------------------------


def _bfs_to_mask(
    grid: PlannerGrid, start: Tuple[int, int], mask: np.ndarray
) -> Optional[List[Tuple[int, int]]]:
    """Shortest 8-connected free-cell hop path from start to any mask cell."""
    if mask[start]:
        return [start]
    prev: Dict[Tuple[int, int], Tuple[int, int]] = {}
    seen = {start}
    frontier = [start]
    while frontier:
        nxt: List[Tuple[int, int]] = []
        for cell in frontier:
            for dx, dy in _NEIGHBORS:
                nb = (cell[0] + dx, cell[1] + dy)
                if nb in seen or not grid.is_free_cell(nb):
                    continue
                seen.add(nb)
                prev[nb] = cell
                if mask[nb]:
                    path = [nb]
                    while path[-1] != start:
                        path.append(prev[path[-1]])
                    path.reverse()
                    return path
                nxt.append(nb)
        frontier = nxt
    return None


def _dijkstra_on_mask(
    grid: PlannerGrid, mask: np.ndarray, start: Tuple[int, int], goal: Tuple[int, int]
) -> Optional[List[Tuple[int, int]]]:
    """Shortest path constrained to mask cells, 8-connected, metric costs."""
    dist: Dict[Tuple[int, int], float] = {start: 0.0}
    prev: Dict[Tuple[int, int], Tuple[int, int]] = {}
    heap: List[Tuple[float, Tuple[int, int]]] = [(0.0, start)]
    visited = set()
    while heap:
        d, cell = heapq.heappop(heap)
        if cell in visited:
            continue
        visited.add(cell)
        if cell == goal:
            path = [cell]
            while path[-1] != start:
                path.append(prev[path[-1]])
            path.reverse()
            return path
        for dx, dy in _NEIGHBORS:
            nb = (cell[0] + dx, cell[1] + dy)
            if not grid.in_grid(nb) or not mask[nb]:
                continue
            step = _SQRT2 if dx and dy else 1.0
            nd = d + step
            if nd < dist.get(nb, math.inf):
                dist[nb] = nd
                prev[nb] = cell
                heapq.heappush(heap, (nd, nb))
    return None


def _simplify(cells: List[Tuple[int, int]]) -> List[Tuple[int, int]]:
    """Drop interior cells of straight runs."""
    if len(cells) <= 2:
        return cells
    out = [cells[0]]
    for prev_c, cur, nxt in zip(cells, cells[1:], cells[2:]):
        d1 = (cur[0] - prev_c[0], cur[1] - prev_c[1])
        d2 = (nxt[0] - cur[0], nxt[1] - cur[1])
        if d1 != d2:
            out.append(cur)
    out.append(cells[-1])
    return out


def goal_cell_for_footprint(
    grid: PlannerGrid, fp: Footprint, component: Optional[int] = None
) -> Optional[Tuple[int, int]]:
    """Nearest free cell adjacent to the footprint region.

    Multi-source BFS from the footprint's cells outward; the first BFS layer
    containing acceptable free cells wins, ties resolved lexicographically.
    ``component`` restricts to one free-space component (reachability filter).
    """
    if abs(fp.resolution - grid.resolution) > 1e-12:
        raise PlanningError(
            f"footprint resolution {fp.resolution} != grid resolution {grid.resolution}"
        )

    def acceptable(cell: Tuple[int, int]) -> bool:
        if not grid.free[cell]:
            return False
        return component is None or grid.component_of(cell) == component

    seeds = [
        (cx - grid.origin[0], cy - grid.origin[1])
        for cx, cy in sorted(fp.cells)
    ]
    seeds = [c for c in seeds if grid.in_grid(c)]
    if not seeds:
        return None
    free_seeds = sorted(c for c in seeds if acceptable(c))
    if free_seeds:
        return free_seeds[0]
    seen = set(seeds)
    frontier = list(seeds)
    while frontier:
        nxt: List[Tuple[int, int]] = []
        for cell in frontier:
            for dx, dy in _NEIGHBORS:
                nb = (cell[0] + dx, cell[1] + dy)
                if nb in seen or not grid.in_grid(nb):
                    continue
                seen.add(nb)
                nxt.append(nb)
        free_cells = sorted(c for c in nxt if acceptable(c))
        if free_cells:
            return free_cells[0]
        frontier = nxt
    return None


def plan_global(
    grid: PlannerGrid, start_xy: Sequence[float], goal: "Footprint | Tuple[float, float]"
) -> Optional[Path]:
    """Deterministic skeleton route from start to a footprint (or point).

    The route enters the free-space skeleton by the shortest free-cell hop
    path, follows the skeleton (Dijkstra), and exits to the goal cell the same
    way. Straight-line shortcut: when the direct segment is collision-free it
    is returned immediately (covers empty layouts). Returns None when start
    and goal lie in different free components; raises PlanningError when the
    start is inside an obstacle.
    """
    start_cell = grid.cell_of(start_xy)
    if not grid.is_free_cell(start_cell):
        raise PlanningError(f"start {tuple(start_xy)} lies inside an obstacle")
    start_component = grid.component_of(start_cell)
    if isinstance(goal, Footprint):
        goal_cell = goal_cell_for_footprint(grid, goal, component=start_component)
        if goal_cell is None:
            return None
    else:
        goal_cell = grid.cell_of(goal)
        if not grid.is_free_cell(goal_cell):
            return None
        if grid.component_of(goal_cell) != start_component:
            return None
    goal_xy = grid.center_of(goal_cell)
    start_xy = (float(start_xy[0]), float(start_xy[1]))
    if start_cell == goal_cell:
        return Path(waypoints=(start_xy,), length=0.0)
    if grid.segment_free(start_xy, goal_xy):
        return Path(
            waypoints=(start_xy, goal_xy),
            length=_polyline_length([start_xy, goal_xy]),
        )
    skel = grid.skeleton()
    if not skel.any():
        return None
    entry_path = _bfs_to_mask(grid, start_cell, skel)
    exit_path = _bfs_to_mask(grid, goal_cell, skel)
    if entry_path is None or exit_path is None:
        return None
    spine = _dijkstra_on_mask(grid, skel, entry_path[-1], exit_path[-1])
    if spine is None:
        return None
    cells = entry_path[:-1] + spine + list(reversed(exit_path))[1:]
    cells = _simplify(cells)
    waypoints: List[Tuple[float, float]] = [start_xy]
    waypoints.extend(grid.center_of(c) for c in cells)
    if waypoints[-1] != goal_xy:
        waypoints.append(goal_xy)
    # Collapse consecutive duplicates introduced by cell/center rounding.
    deduped = [waypoints[0]]
    for wp in waypoints[1:]:
        if math.hypot(wp[0] - deduped[-1][0], wp[1] - deduped[-1][1]) > 1e-9:
            deduped.append(wp)
    return Path(waypoints=tuple(deduped), length=_polyline_length(deduped))


# --- local planner (RRT*) --------------------------------------------------


def plan_local(
    grid: PlannerGrid,
    start_xy: Sequence[float],
    goal_xy: Sequence[float],
    budget: int = 5000,
    seed: int = 0,
    step: float = 0.3,
    goal_bias: float = 0.05,
    early_exit_ratio: Optional[float] = None,
) -> Optional[Path]:
    """Seeded RRT* with shrinking-ball rewiring.

    The sampling sequence depends only on the seed and iteration index, so for
    a fixed seed the best path cost is non-increasing in the budget. A goal
    inside an obstacle snaps to the nearest free cell center within 0.5 m
    (else failure). ``early_exit_ratio`` optionally stops refinement once the
    best cost is within that factor of the straight-line distance.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    start = (float(start_xy[0]), float(start_xy[1]))
    if not grid.is_free_point(start):
        raise PlanningError(f"start {start} lies inside an obstacle")
    goal = (float(goal_xy[0]), float(goal_xy[1]))
    if not grid.is_free_point(goal):
        snapped = grid.nearest_free_cell(goal, max_radius=0.5)
        if snapped is None:
            return None
        goal = grid.center_of(snapped)
    if math.hypot(goal[0] - start[0], goal[1] - start[1]) < 1e-9:
        return Path(waypoints=(start,), length=0.0)
    if grid.segment_free(start, goal):
        # Trivially optimal; sampling cannot improve on the straight segment.
        return Path(waypoints=(start, goal), length=_polyline_length([start, goal]))

    rng = np.random.default_rng(seed)
    lo_x = (grid.origin[0]) * grid.resolution
    lo_y = (grid.origin[1]) * grid.resolution
    hi_x = (grid.origin[0] + grid.shape[0]) * grid.resolution
    hi_y = (grid.origin[1] + grid.shape[1]) * grid.resolution
    free_area = float(grid.free.sum()) * grid.resolution**2
    gamma = 2.0 * math.sqrt(1.5 * max(free_area, 1e-6) / math.pi)
    straight = math.hypot(goal[0] - start[0], goal[1] - start[1])

    nodes = np.empty((budget + 1, 2), dtype=np.float64)
    nodes[0] = start
    parents = np.full(budget + 1, -1, dtype=np.int64)
    costs = np.zeros(budget + 1, dtype=np.float64)
    children: List[List[int]] = [[] for _ in range(budget + 1)]
    n = 1
    # node id -> free-segment distance to goal; costs may keep improving via
    # rewires, so the winner is chosen from live costs, not recorded ones.
    goal_links: Dict[int, float] = {}

    def best_goal_cost() -> float:
        if not goal_links:
            return math.inf
        return min(costs[i] + d for i, d in goal_links.items())

    for _ in range(budget):
        if rng.random() < goal_bias:
            sample = np.array(goal)
        else:
            sample = np.array(
                [rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)]
            )
        diffs = nodes[:n] - sample
        d2 = np.einsum("ij,ij->i", diffs, diffs)
        nearest = int(np.argmin(d2))
        direction = sample - nodes[nearest]
        dist = math.hypot(direction[0], direction[1])
        if dist < 1e-9:
            continue
        if dist > step:
            new_pt = nodes[nearest] + direction * (step / dist)
        else:
            new_pt = sample
        if not grid.is_free_point(new_pt):
            continue
        # Shrinking ball; never below the steer step, so the nearest node
        # (at most ``step`` away by construction) is always a candidate.
        ball = min(2.0 * step, max(step, gamma * math.sqrt(math.log(n + 1) / (n + 1))))
        diffs = nodes[:n] - new_pt
        dists = np.sqrt(np.einsum("ij,ij->i", diffs, diffs))
        near_ids = np.flatnonzero(dists <= ball)
        parent = -1
        parent_cost = math.inf
        order = near_ids[np.lexsort((near_ids, costs[near_ids] + dists[near_ids]))]
        for idx in order:
            if grid.segment_free(nodes[idx], new_pt):
                parent = int(idx)
                parent_cost = float(costs[idx] + dists[idx])
                break
        if parent < 0:
            continue
        nodes[n] = new_pt
        parents[n] = parent
        costs[n] = parent_cost
        children[parent].append(n)
        # Rewire neighbors through the new node when that is cheaper.
        for idx in near_ids:
            rewired_cost = parent_cost + float(dists[idx])
            if rewired_cost + 1e-12 < costs[idx] and grid.segment_free(new_pt, nodes[idx]):
                children[int(parents[idx])].remove(int(idx))
                parents[idx] = n
                children[n].append(int(idx))
                delta = costs[idx] - rewired_cost
                costs[idx] = rewired_cost
                _propagate_cost(costs, children, int(idx), delta)
        goal_dist = math.hypot(new_pt[0] - goal[0], new_pt[1] - goal[1])
        if goal_dist <= step and grid.segment_free(new_pt, goal):
            goal_links[n] = goal_dist
        n += 1
        if (
            early_exit_ratio is not None
            and goal_links
            and best_goal_cost() <= early_exit_ratio * straight
        ):
            break

    if not goal_links:
        return None
    winner = min(goal_links, key=lambda i: (costs[i] + goal_links[i], i))
    chain = [winner]
    while parents[chain[-1]] >= 0:
        chain.append(int(parents[chain[-1]]))
    chain.reverse()
    waypoints = [tuple(map(float, nodes[i])) for i in chain] + [goal]
    return Path(waypoints=tuple(waypoints), length=_polyline_length(waypoints))


def _propagate_cost(
    costs: np.ndarray, children: List[List[int]], root: int, delta: float
) -> None:
    """Push a cost improvement down the subtree under ``root``."""
    stack = list(children[root])
    while stack:
        node = stack.pop()
        costs[node] -= delta
        stack.extend(children[node])
