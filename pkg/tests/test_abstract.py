"""Abstract map tests: anchor classification, on-relations, layout, updates."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from conftest import axis, make_frame, make_obs, unit
from semnav.abstract import (
    AbstractMap,
    Anchor,
    OccupancyLayout,
    abstract_map,
    anchor_template,
    classify_anchor,
    compute_layout,
    on_relation,
    update_abstract,
)
from semnav.concrete import ConcreteMap, HistoryEntry, initialize
from semnav.config import RunConfig
from semnav.features import cosine, l2_normalize, mean_feature
from semnav.geometry import EMPTY_CLOUD, Footprint, PointCloud, footprint


def grid_cloud(x0: float, y0: float, nx: int, ny: int, z: float, spacing: float = 0.0625) -> np.ndarray:
    """nx*ny points on a 1/16 m lattice at a fixed height."""
    return np.array(
        [[x0 + i * spacing, y0 + j * spacing, z] for i in range(nx) for j in range(ny)]
    )


def table_cloud(x0: float, y0: float, top: float = 0.7) -> np.ndarray:
    """Dense top plus sparse legs: supporting plane lands at the top."""
    surface = grid_cloud(x0, y0, 10, 10, top)
    legs = np.array(
        [[x0 + dx, y0 + dy, z] for dx, dy in ((0.0, 0.0), (0.5, 0.5)) for z in (0.1, 0.3, 0.5)]
    )
    return np.vstack([surface, legs])


def cup_cloud(x0: float, y0: float, bottom: float) -> np.ndarray:
    return grid_cloud(x0, y0, 3, 3, bottom) + np.array([0.0, 0.0, 0.0])


def adopt_object(cmap: ConcreteMap, points: np.ndarray, feature: np.ndarray, cls: str, ts: int = 0):
    obs = make_obs(points, feature, cls, ts)
    return cmap.adopt(PointCloud(points), [HistoryEntry(ts, cls, obs)])


@pytest.fixture
def cfg():
    return RunConfig(dim=8)


TEMPLATE = unit([1.0, 1.0, 0, 0, 0, 0, 0, 0])  # cos 1/sqrt(2) with e0 and e1
ANCHOR_F = axis(8, 0)
ANCHOR_G = axis(8, 1)
VOLATILE_F = axis(8, 2)  # orthogonal to the template


class TestClassifyAnchor:
    def test_template_itself_is_anchor(self):
        assert classify_anchor(TEMPLATE, TEMPLATE, 0.99)

    def test_orthogonal_is_volatile(self):
        assert not classify_anchor(VOLATILE_F, TEMPLATE, 0.5)

    def test_threshold_is_strict(self):
        # cos(e0, template) == 1/sqrt(2) exactly in this construction
        score = cosine(ANCHOR_F, TEMPLATE)
        assert classify_anchor(ANCHOR_F, TEMPLATE, score - 1e-12)
        assert not classify_anchor(ANCHOR_F, TEMPLATE, score)

    def test_vocabulary_classes_split_cleanly(self, vocab6):
        template = vocab6.static_template()
        for cls in ("table", "shelf", "sofa"):
            for inst in range(8):
                assert classify_anchor(vocab6.embed(cls, inst), template, 0.6)
        for cls in ("cup", "book", "plant"):
            for inst in range(8):
                assert not classify_anchor(vocab6.embed(cls, inst), template, 0.6)

    def test_invariant_under_renormalization(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            f = oracles.random_unit(rng, 8)
            t = oracles.random_unit(rng, 8)
            scaled = l2_normalize(t * 3.7)
            assert classify_anchor(f, t, 0.6) == classify_anchor(f, scaled, 0.6)


def test_anchor_template_is_normalized_mean():
    feats = [axis(8, 0), axis(8, 1)]
    got = anchor_template(feats)
    assert np.allclose(got, mean_feature(feats), atol=0)
    assert got[0] == pytest.approx(0.7071067811865475, abs=1e-9)


class TestOnRelation:
    def make_anchor(self, cfg, x0=0.0, y0=0.0):
        cloud = PointCloud(table_cloud(x0, y0))
        from semnav.geometry import supporting_plane_z

        support = supporting_plane_z(cloud, cfg.support_bin, cfg.support_min_points)
        fp = footprint(cloud, cfg.grid_resolution, z_support=support)
        return Anchor(
            id=0, class_id="table", feature=ANCHOR_F, footprint=fp,
            support_z=support, cloud_size=len(cloud),
        )

    def as_object(self, cfg, points, feature=VOLATILE_F, cls="cup"):
        cmap = ConcreteMap(cfg)
        return adopt_object(cmap, points, feature, cls)

    def test_resting_inside_is_on(self, cfg):
        anchor = self.make_anchor(cfg)
        cup = self.as_object(cfg, cup_cloud(0.2, 0.2, anchor.support_z + 0.02))
        assert on_relation(cup, anchor, cfg)

    def test_floating_above_is_not_on(self, cfg):
        anchor = self.make_anchor(cfg)
        cup = self.as_object(cfg, cup_cloud(0.2, 0.2, anchor.support_z + 0.3))
        assert not on_relation(cup, anchor, cfg)

    def test_below_plane_is_not_on(self, cfg):
        anchor = self.make_anchor(cfg)
        cup = self.as_object(cfg, cup_cloud(0.2, 0.2, anchor.support_z - 0.2))
        assert not on_relation(cup, anchor, cfg)

    def test_beside_with_zero_overlap_is_not_on(self, cfg):
        anchor = self.make_anchor(cfg)
        cup = self.as_object(cfg, cup_cloud(3.0, 0.2, anchor.support_z + 0.02))
        assert not on_relation(cup, anchor, cfg)

    def test_anchor_without_support_plane_hosts_nothing(self, cfg):
        anchor = Anchor(
            id=0, class_id="table", feature=ANCHOR_F,
            footprint=Footprint(frozenset({(0, 0)}), cfg.grid_resolution),
            support_z=None, cloud_size=4,
        )
        cup = self.as_object(cfg, cup_cloud(0.0, 0.0, 0.72))
        assert not on_relation(cup, anchor, cfg)

    def test_lift_boundaries_inclusive(self, cfg):
        anchor = self.make_anchor(cfg)
        exactly_on = self.as_object(cfg, cup_cloud(0.2, 0.2, anchor.support_z))
        assert on_relation(exactly_on, anchor, cfg)
        at_limit = self.as_object(cfg, cup_cloud(0.2, 0.2, anchor.support_z + cfg.on_distance))
        assert on_relation(at_limit, anchor, cfg)

    def test_containment_gate(self, cfg):
        anchor = self.make_anchor(cfg)
        # 3x3 cup cells: shift so only a sliver stays over the table
        partially_off = self.as_object(cfg, cup_cloud(0.55, 0.55, anchor.support_z + 0.02))
        fully_on = self.as_object(cfg, cup_cloud(0.2, 0.2, anchor.support_z + 0.02))
        assert on_relation(fully_on, anchor, cfg)
        ratio = oracles.containment_brute(
            oracles.footprint_cells_brute(partially_off.cloud.points, cfg.grid_resolution),
            set(anchor.footprint.cells),
        )
        assert on_relation(partially_off, anchor, cfg) == (ratio >= cfg.containment_threshold)


class TestAbstractMap:
    def scene(self):
        return PointCloud(grid_cloud(0.0, 0.0, 30, 30, 0.0))

    def test_one_table_one_cup(self, cfg):
        cmap = ConcreteMap(cfg)
        adopt_object(cmap, table_cloud(0.0, 0.0), ANCHOR_F, "table")
        cup_feature = unit([0, 0, 5, 1, 0, 0, 0, 0])
        adopt_object(cmap, cup_cloud(0.2, 0.2, 0.77), cup_feature, "cup", ts=1)
        amap = abstract_map(cmap, TEMPLATE, self.scene(), cfg)
        assert len(amap.anchors) == 1
        anchor = amap.anchors[0]
        assert anchor.class_id == "table"
        assert len(anchor.volatile_features) == 1
        assert np.array_equal(anchor.volatile_features[0], cup_feature)
        assert amap.next_anchor_id == 1

    def test_cup_on_floor_is_dropped(self, cfg):
        cmap = ConcreteMap(cfg)
        adopt_object(cmap, table_cloud(0.0, 0.0), ANCHOR_F, "table")
        adopt_object(cmap, cup_cloud(3.0, 3.0, 0.0), VOLATILE_F, "cup", ts=1)
        amap = abstract_map(cmap, TEMPLATE, self.scene(), cfg)
        assert len(amap.anchors) == 1
        assert amap.anchors[0].volatile_features == ()

    def test_scripted_volatile_distribution(self, cfg):
        # three tables, five cups: 2 + 2 + 1 resting on them
        cmap = ConcreteMap(cfg)
        tables = [(0.0, 0.0), (3.0, 0.0), (6.0, 0.0)]
        for i, (x, y) in enumerate(tables):
            adopt_object(cmap, table_cloud(x, y), ANCHOR_F if i % 2 == 0 else ANCHOR_G, "table", ts=i)
        cups = [(0.1, 0.1, 0), (0.4, 0.4, 0), (3.2, 0.2, 1), (3.4, 0.4, 1), (6.2, 0.2, 2)]
        for k, (x, y, host) in enumerate(cups):
            feature = unit(np.eye(8)[2] * 3 + np.eye(8)[3 + k % 4])
            adopt_object(cmap, cup_cloud(x, y, 0.77), feature, "cup", ts=10 + k)
        amap = abstract_map(cmap, TEMPLATE, self.scene(), cfg)
        assert len(amap.anchors) == 3
        sizes = [len(amap.anchors[i].volatile_features) for i in range(3)]
        assert sizes == [2, 2, 1]

    def test_anchor_ids_follow_sorted_object_ids(self, cfg):
        cmap = ConcreteMap(cfg)
        adopt_object(cmap, table_cloud(5.0, 0.0), ANCHOR_F, "tableB", ts=0)
        adopt_object(cmap, table_cloud(0.0, 0.0), ANCHOR_G, "tableA", ts=1)
        amap = abstract_map(cmap, TEMPLATE, self.scene(), cfg)
        assert amap.anchors[0].class_id == "tableB"  # lower object id first
        assert amap.anchors[1].class_id == "tableA"

    def test_idempotent_for_fixed_input(self, cfg):
        cmap = ConcreteMap(cfg)
        adopt_object(cmap, table_cloud(0.0, 0.0), ANCHOR_F, "table")
        adopt_object(cmap, cup_cloud(0.2, 0.2, 0.77), VOLATILE_F, "cup", ts=1)
        a = abstract_map(cmap, TEMPLATE, self.scene(), cfg)
        b = abstract_map(cmap, TEMPLATE, self.scene(), cfg)
        assert a.layout == b.layout
        assert sorted(a.anchors) == sorted(b.anchors)
        for aid in a.anchors:
            x, y = a.anchors[aid], b.anchors[aid]
            assert x.class_id == y.class_id
            assert np.array_equal(x.feature, y.feature)
            assert x.footprint == y.footprint
            assert x.support_z == y.support_z
            assert len(x.volatile_features) == len(y.volatile_features)
            for u, v in zip(x.volatile_features, y.volatile_features):
                assert np.array_equal(u, v)

    def test_volatile_ties_go_to_earlier_anchor(self, cfg):
        # two tables sharing the same spot: identical containment, first wins
        cmap = ConcreteMap(cfg)
        adopt_object(cmap, table_cloud(0.0, 0.0), ANCHOR_F, "table", ts=0)
        adopt_object(cmap, table_cloud(0.0, 0.0), ANCHOR_G, "table", ts=1)
        adopt_object(cmap, cup_cloud(0.2, 0.2, 0.77), VOLATILE_F, "cup", ts=2)
        amap = abstract_map(cmap, TEMPLATE, self.scene(), cfg)
        assert len(amap.anchors[0].volatile_features) == 1
        assert len(amap.anchors[1].volatile_features) == 0


class TestComputeLayout:
    def test_empty_scene(self):
        layout = compute_layout(EMPTY_CLOUD, 0.1)
        assert layout.is_empty
        assert layout.occupied == frozenset()
        assert layout.bounds is None

    def test_uniform_floor_marks_everything(self):
        # single-layer floor: every cell has the same count, so all occupied
        floor = grid_cloud(0.0, 0.0, 8, 8, 0.0, spacing=0.1)
        layout = compute_layout(PointCloud(floor), 0.1)
        assert layout.occupied == frozenset(oracles.footprint_cells_brute(floor, 0.1))

    def test_walls_beat_sparse_floor(self):
        # 20 points per wall cell vs 2 per floor cell: exactly the walls stay
        pts = []
        wall_cells = [(0, y) for y in range(6)] + [(5, y) for y in range(6)]
        floor_cells = [(x, y) for x in range(1, 5) for y in range(6)]
        for cx, cy in wall_cells:
            for k in range(20):
                pts.append([cx * 0.1 + 0.05, cy * 0.1 + 0.05, 0.1 + 0.01 * k])
        for cx, cy in floor_cells:
            for k in range(2):
                pts.append([cx * 0.1 + 0.05, cy * 0.1 + 0.02 + 0.04 * k, 0.0])
        cloud = PointCloud(np.array(pts))
        layout = compute_layout(cloud, 0.1)
        assert layout.occupied == frozenset(wall_cells)
        assert layout.occupied == frozenset(oracles.layout_occupied_brute(np.array(pts), 0.1))

    def test_percentile_path_with_ten_distinct_counts(self):
        pts = []
        for c in range(12):
            for k in range(c + 1):
                pts.append([c + 0.5, 0.5, 0.0])
        pts = np.array(pts)
        layout = compute_layout(PointCloud(pts), 1.0)
        # counts 1..12: lower 90th percentile threshold = 10
        assert layout.occupied == frozenset({(9, 0), (10, 0), (11, 0)})
        assert layout.occupied == frozenset(oracles.layout_occupied_brute(pts, 1.0))

    def test_fewer_than_ten_distinct_counts_uses_max(self):
        pts = []
        for c in range(9):
            for k in range(c + 1):
                pts.append([c + 0.5, 0.5, 0.0])
        pts = np.array(pts)
        layout = compute_layout(PointCloud(pts), 1.0)
        assert layout.occupied == frozenset({(8, 0)})

    def test_resolution_refinement_preserves_area(self):
        # 4 points per fine cell so both resolutions see uniform counts
        pts = []
        for i in range(8):
            for j in range(8):
                for du, dv in ((0.2, 0.2), (0.2, 0.7), (0.7, 0.2), (0.7, 0.7)):
                    pts.append([(i + du) * 0.1, (j + dv) * 0.1, 0.0])
        cloud = PointCloud(np.array(pts))
        coarse = compute_layout(cloud, 0.2)
        fine = compute_layout(cloud, 0.1)
        area_coarse = len(coarse.occupied) * 0.2 * 0.2
        area_fine = len(fine.occupied) * 0.1 * 0.1
        assert area_coarse == pytest.approx(area_fine, abs=1e-9)

    def test_bounds_cover_all_cells(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-2, 2, size=(200, 3))
        layout = compute_layout(PointCloud(pts), 0.25)
        ix_min, iy_min, ix_max, iy_max = layout.bounds
        cells = oracles.footprint_cells_brute(pts, 0.25)
        assert ix_min == min(c[0] for c in cells)
        assert iy_max == max(c[1] for c in cells)
        assert all(ix_min <= cx <= ix_max and iy_min <= cy <= iy_max for cx, cy in layout.occupied)

    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 400))
    def test_matches_brute_force(self, seed, n):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0, 2, size=(n, 3))
        layout = compute_layout(PointCloud(pts), 0.25)
        assert layout.occupied == frozenset(oracles.layout_occupied_brute(pts, 0.25))

    def test_rejects_bad_resolution(self):
        with pytest.raises(ValueError):
            compute_layout(EMPTY_CLOUD, 0.0)


def build_single_anchor_map(cfg, x0=0.0, feature=ANCHOR_F, volatile=None):
    cmap = ConcreteMap(cfg)
    adopt_object(cmap, table_cloud(x0, 0.0), feature, "table")
    if volatile is not None:
        adopt_object(cmap, cup_cloud(x0 + 0.2, 0.2, 0.77), volatile, "cup", ts=1)
    scene = PointCloud(grid_cloud(0.0, 0.0, 40, 20, 0.0))
    return abstract_map(cmap, TEMPLATE, scene, cfg)


def local_map_with_object(cfg, points, feature, volatile=None, volatile_xy=None):
    cmap = ConcreteMap(cfg)
    adopt_object(cmap, points, feature, "table")
    if volatile is not None:
        x, y = volatile_xy
        adopt_object(cmap, cup_cloud(x, y, 0.77), volatile, "cup", ts=1)
    return cmap


class TestUpdateAbstract:
    def test_identical_reobservation_is_noop_merge(self, cfg):
        amap = build_single_anchor_map(cfg, volatile=VOLATILE_F)
        local = local_map_with_object(
            cfg, table_cloud(0.0, 0.0), ANCHOR_F, volatile=VOLATILE_F, volatile_xy=(0.2, 0.2)
        )
        updated, log = update_abstract(amap, local, TEMPLATE, cfg)
        assert [aid for aid, _, _ in log.merged] == [0]
        assert log.inserted == [] and log.unchanged == []
        anchor = updated.anchors[0]
        assert np.allclose(anchor.feature, amap.anchors[0].feature, atol=1e-12)
        assert anchor.footprint.cells == amap.anchors[0].footprint.cells
        assert len(anchor.volatile_features) == 1
        assert updated.layout is amap.layout

    def test_weighted_feature_update_frozen_values(self, cfg):
        # 100-point anchor with e0 meets 300-point re-observation with e1
        amap = build_single_anchor_map(cfg)
        base_cloud = grid_cloud(0.0, 0.0, 10, 10, 0.7)
        assert len(amap.anchors) == 1
        # rebuild the anchor with a bare 100-point top so cloud_size is exact
        cmap = ConcreteMap(cfg)
        adopt_object(cmap, base_cloud, ANCHOR_F, "table")
        scene = PointCloud(grid_cloud(0.0, 0.0, 40, 20, 0.0))
        amap = abstract_map(cmap, TEMPLATE, scene, cfg)
        assert amap.anchors[0].cloud_size == 100

        local_cloud = grid_cloud(0.0, 0.0, 20, 15, 0.7)
        local = local_map_with_object(cfg, local_cloud, ANCHOR_G)
        assert len(local.objects[0].cloud) == 300

        updated, log = update_abstract(amap, local, TEMPLATE, cfg)
        assert [aid for aid, _, _ in log.merged] == [0]
        anchor = updated.anchors[0]
        want = oracles.feature_update_fsum(ANCHOR_F, 100, ANCHOR_G, 300)
        assert np.allclose(anchor.feature, want, atol=1e-9)
        assert anchor.feature[0] == pytest.approx(0.31622776601683794, abs=1e-9)
        assert anchor.feature[1] == pytest.approx(0.9486832980505138, abs=1e-9)
        assert anchor.cloud_size == 400

    def test_zero_overlap_inserts_new_anchor(self, cfg):
        amap = build_single_anchor_map(cfg)
        local = local_map_with_object(cfg, table_cloud(3.0, 0.0), ANCHOR_G)
        updated, log = update_abstract(amap, local, TEMPLATE, cfg)
        assert log.merged == []
        assert log.inserted == [1]
        assert log.unchanged == [0]
        assert updated.anchors[1].class_id == "table"
        assert updated.next_anchor_id == 2

    def test_merge_boundary_is_strict(self):
        # shared/min cells == 0.5 exactly; with merge_overlap 0.5 no merge fires.
        # grid 0.125 and shift 0.5 are binary-exact, so cell floors are too
        cfg = RunConfig(dim=8, merge_overlap=0.5, grid_resolution=0.125)
        base = grid_cloud(0.0, 0.0, 16, 16, 0.7)  # footprint 8x8
        cmap = ConcreteMap(cfg)
        adopt_object(cmap, base, ANCHOR_F, "table")
        scene = PointCloud(grid_cloud(0.0, 0.0, 40, 20, 0.0))
        amap = abstract_map(cmap, TEMPLATE, scene, cfg)
        shifted = base + np.array([0.5, 0.0, 0.0])  # 4 of 8 columns shared
        local = local_map_with_object(cfg, shifted, ANCHOR_G)
        fp_a = oracles.footprint_cells_brute(base, cfg.grid_resolution)
        fp_b = oracles.footprint_cells_brute(shifted, cfg.grid_resolution)
        assert oracles.footprint_overlap_brute(fp_a, fp_b) == 0.5
        updated, log = update_abstract(amap, local, TEMPLATE, cfg)
        assert log.merged == []
        assert log.inserted == [1]

    def test_replace_boundary_keeps_existing_volatiles(self):
        # overlap 0.5 > merge 0.3 but not > replace 0.5: volatile list survives
        cfg = RunConfig(dim=8, replace_overlap=0.5, grid_resolution=0.125)
        base = grid_cloud(0.0, 0.0, 16, 16, 0.7)
        cmap = ConcreteMap(cfg)
        adopt_object(cmap, base, ANCHOR_F, "table")
        adopt_object(cmap, cup_cloud(0.2, 0.2, 0.77), VOLATILE_F, "cup", ts=1)
        scene = PointCloud(grid_cloud(0.0, 0.0, 40, 20, 0.0))
        amap = abstract_map(cmap, TEMPLATE, scene, cfg)
        assert len(amap.anchors[0].volatile_features) == 1
        shifted = base + np.array([0.5, 0.0, 0.0])
        fresh = axis(8, 3)
        local = local_map_with_object(cfg, shifted, ANCHOR_G, volatile=fresh, volatile_xy=(0.7, 0.2))
        updated, log = update_abstract(amap, local, TEMPLATE, cfg)
        aid, overlap, replaced = log.merged[0]
        assert overlap == 0.5 and not replaced
        got = updated.anchors[aid].volatile_features
        assert len(got) == 1
        assert np.array_equal(got[0], VOLATILE_F)

    def test_high_overlap_replaces_volatiles(self, cfg):
        amap = build_single_anchor_map(cfg, volatile=VOLATILE_F)
        fresh = axis(8, 3)
        local = local_map_with_object(
            cfg, table_cloud(0.0, 0.0), ANCHOR_G, volatile=fresh, volatile_xy=(0.2, 0.2)
        )
        updated, log = update_abstract(amap, local, TEMPLATE, cfg)
        aid, overlap, replaced = log.merged[0]
        assert overlap == 1.0 and replaced
        got = updated.anchors[aid].volatile_features
        assert len(got) == 1
        assert np.array_equal(got[0], fresh)

    def test_log_partitions_anchor_ids(self, cfg):
        amap = build_single_anchor_map(cfg)
        # second pre-existing anchor far away stays unchanged
        cmap = ConcreteMap(cfg)
        adopt_object(cmap, table_cloud(0.0, 0.0), ANCHOR_F, "table", ts=0)
        adopt_object(cmap, table_cloud(5.0, 0.0), ANCHOR_G, "table", ts=1)
        scene = PointCloud(grid_cloud(0.0, 0.0, 100, 20, 0.0))
        amap = abstract_map(cmap, TEMPLATE, scene, cfg)
        local = ConcreteMap(cfg)
        adopt_object(local, table_cloud(0.0, 0.0), ANCHOR_F, "table", ts=2)
        adopt_object(local, table_cloud(9.0, 0.0), ANCHOR_G, "table", ts=3)
        updated, log = update_abstract(amap, local, TEMPLATE, cfg)
        merged_ids = {aid for aid, _, _ in log.merged}
        claimed = merged_ids | set(log.inserted) | set(log.unchanged)
        assert claimed == set(updated.anchors)
        assert merged_ids.isdisjoint(log.inserted)
        assert merged_ids.isdisjoint(log.unchanged)
        assert set(log.inserted).isdisjoint(log.unchanged)

    def test_update_does_not_mutate_input_map(self, cfg):
        amap = build_single_anchor_map(cfg)
        before = {aid: amap.anchors[aid] for aid in amap.anchors}
        local = local_map_with_object(cfg, table_cloud(0.0, 0.0), ANCHOR_G)
        update_abstract(amap, local, TEMPLATE, cfg)
        assert amap.anchors == before
