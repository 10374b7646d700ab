"""Metric tests: label transfer, segmentation scores, ODR, success rate."""

import numpy as np
import pytest

from semnav.concrete import ConcreteMap, HistoryEntry
from semnav.errors import DataError
from semnav.geometry import PointCloud
from semnav.metrics import (
    UNMATCHED,
    LabeledCloud,
    failure_kind,
    labeled_cloud_from_map,
    odr,
    segmentation_metrics,
    success_rate,
    transfer_labels,
)
from semnav.navigation import Attempt, NavigationEpisode

import oracles
from conftest import axis, make_obs


def line_cloud(n, labels, names=("a", "b")):
    pts = np.zeros((n, 3))
    pts[:, 0] = np.arange(n, dtype=np.float64)
    return LabeledCloud(points=pts, labels=np.asarray(labels), class_names=names)


TEN_GT = line_cloud(10, [0] * 6 + [1] * 4)


class TestLabeledCloud:
    def test_validation(self):
        with pytest.raises(DataError):
            LabeledCloud(points=np.zeros((3, 2)), labels=np.zeros(3, int), class_names=("a",))
        with pytest.raises(DataError):
            LabeledCloud(points=np.zeros((3, 3)), labels=np.zeros(2, int), class_names=("a",))
        with pytest.raises(DataError):
            LabeledCloud(points=np.zeros((3, 3)), labels=np.array([0, 0, 1]), class_names=("a",))
        with pytest.raises(DataError):
            LabeledCloud(
                points=np.array([[0.0, 0.0, np.inf]]), labels=np.zeros(1, int), class_names=("a",)
            )

    def test_arrays_frozen(self):
        cloud = line_cloud(4, [0, 0, 1, 1])
        with pytest.raises(ValueError):
            cloud.points[0, 0] = 5.0
        with pytest.raises(ValueError):
            cloud.labels[0] = 1


class TestTransferLabels:
    def test_nearest_label_within_radius(self):
        pred = line_cloud(3, [1, 0, 1])
        gt = LabeledCloud(
            points=np.array([[0.05, 0, 0], [1.2, 0, 0], [9.0, 0, 0]]),
            labels=np.array([0, 0, 0]),
            class_names=("a", "b"),
        )
        out = transfer_labels(pred, gt, match_radius=0.3)
        assert out.tolist() == [1, 0, UNMATCHED]

    def test_radius_boundary_inclusive(self):
        pred = LabeledCloud(points=np.array([[0.0, 0, 0]]), labels=np.array([1]), class_names=("a", "b"))
        gt = LabeledCloud(points=np.array([[0.5, 0, 0]]), labels=np.array([0]), class_names=("a", "b"))
        assert transfer_labels(pred, gt, match_radius=0.5).tolist() == [1]

    def test_empty_pred_matches_nothing(self):
        pred = LabeledCloud(points=np.zeros((0, 3)), labels=np.zeros(0, int), class_names=("a", "b"))
        assert transfer_labels(pred, TEN_GT, 0.1).tolist() == [UNMATCHED] * 10

    def test_mismatched_class_lists_rejected(self):
        pred = line_cloud(2, [0, 1], names=("a", "c"))
        with pytest.raises(DataError):
            transfer_labels(pred, TEN_GT, 0.1)

    def test_bad_radius_rejected(self):
        with pytest.raises(DataError):
            transfer_labels(TEN_GT, TEN_GT, 0.0)

    def test_agrees_with_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            pred_pts = rng.uniform(0, 2, size=(40, 3))
            pred_labels = rng.integers(0, 3, size=40)
            gt_pts = rng.uniform(0, 2, size=(60, 3))
            pred = LabeledCloud(pred_pts, pred_labels, ("a", "b", "c"))
            gt = LabeledCloud(gt_pts, rng.integers(0, 3, size=60), ("a", "b", "c"))
            got = transfer_labels(pred, gt, 0.4)
            want = oracles.transfer_labels_brute(pred_pts, pred_labels.tolist(), gt_pts, 0.4)
            assert got.tolist() == want


class TestSegmentationMetrics:
    def test_perfect_prediction_scores_one(self):
        report = segmentation_metrics(TEN_GT, TEN_GT)
        assert report.miou == 1.0
        assert report.fmiou == 1.0
        assert report.macc == 1.0
        assert report.per_class_iou == {"a": 1.0, "b": 1.0}
        assert report.support == {"a": 6, "b": 4}

    def test_hand_confusion_all_predicted_one_class(self):
        # 6 gt points of class a, 4 of b; prediction says b everywhere.
        # a: tp=0 fn=6 fp=0 -> IoU 0; b: tp=4 fn=0 fp=6 -> IoU 4/10
        pred = line_cloud(10, [1] * 10)
        report = segmentation_metrics(pred, TEN_GT)
        assert report.per_class_iou["a"] == 0.0
        assert report.per_class_iou["b"] == pytest.approx(0.4)
        assert report.miou == pytest.approx(0.2)
        assert report.fmiou == pytest.approx(0.16)
        assert report.macc == pytest.approx(0.5)
        assert report.per_class_recall == {"a": 0.0, "b": 1.0}

    def test_class_absent_from_pred_counts_as_zero(self):
        pred = line_cloud(10, [0] * 10)
        report = segmentation_metrics(pred, TEN_GT)
        assert report.per_class_iou["b"] == 0.0
        assert report.miou == pytest.approx((0.6 + 0.0) / 2)

    def test_unmatched_gt_is_misclassified(self):
        far = LabeledCloud(
            points=TEN_GT.points + np.array([0.0, 5.0, 0.0]),
            labels=TEN_GT.labels,
            class_names=TEN_GT.class_names,
        )
        report = segmentation_metrics(far, TEN_GT, match_radius=0.1)
        assert report.miou == 0.0
        assert report.macc == 0.0
        assert report.fmiou == 0.0

    def test_empty_gt_rejected(self):
        empty = LabeledCloud(points=np.zeros((0, 3)), labels=np.zeros(0, int), class_names=("a", "b"))
        with pytest.raises(DataError):
            segmentation_metrics(TEN_GT, empty)

    def test_fmiou_equals_miou_on_balanced_fixture(self):
        gt = line_cloud(10, [0] * 5 + [1] * 5)
        pred = line_cloud(10, [0] * 3 + [1] * 2 + [1] * 4 + [0])
        report = segmentation_metrics(pred, gt)
        assert report.support == {"a": 5, "b": 5}
        assert report.fmiou == pytest.approx(report.miou, abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        pred_pts = rng.uniform(0, 3, size=(50, 3))
        pred_labels = rng.integers(0, 2, size=50)
        gt_pts = rng.uniform(0, 3, size=(70, 3))
        gt_labels = rng.integers(0, 2, size=70)
        base = segmentation_metrics(
            LabeledCloud(pred_pts, pred_labels, ("a", "b")),
            LabeledCloud(gt_pts, gt_labels, ("a", "b")),
            0.5,
        )
        pp = rng.permutation(50)
        gp = rng.permutation(70)
        shuffled = segmentation_metrics(
            LabeledCloud(pred_pts[pp], pred_labels[pp], ("a", "b")),
            LabeledCloud(gt_pts[gp], gt_labels[gp], ("a", "b")),
            0.5,
        )
        assert shuffled.per_class_iou == base.per_class_iou
        assert shuffled.miou == base.miou
        assert shuffled.fmiou == base.fmiou
        assert shuffled.macc == base.macc

    def test_agrees_with_brute_force(self):
        rng = np.random.default_rng(21)
        names = ("a", "b", "c")
        for size in (30, 120, 400):
            pred_pts = rng.uniform(0, 4, size=(size, 3))
            pred_labels = rng.integers(0, 3, size=size)
            gt_pts = rng.uniform(0, 4, size=(size + 20, 3))
            gt_labels = rng.integers(0, 3, size=size + 20)
            report = segmentation_metrics(
                LabeledCloud(pred_pts, pred_labels, names),
                LabeledCloud(gt_pts, gt_labels, names),
                0.35,
            )
            want = oracles.segmentation_brute(
                pred_pts, pred_labels.tolist(), gt_pts, gt_labels.tolist(), 0.35
            )
            for ci, name in enumerate(names):
                assert report.per_class_iou[name] == pytest.approx(want["iou"][ci], abs=1e-12)
                assert report.per_class_recall[name] == pytest.approx(want["recall"][ci], abs=1e-12)
                assert report.support[name] == want["support"][ci]
            assert report.miou == pytest.approx(want["miou"], abs=1e-12)
            assert report.fmiou == pytest.approx(want["fmiou"], abs=1e-12)
            assert report.macc == pytest.approx(want["macc"], abs=1e-12)

    def test_report_to_dict_sorted(self):
        report = segmentation_metrics(TEN_GT, TEN_GT)
        d = report.to_dict()
        assert list(d["per_class_iou"]) == ["a", "b"]
        assert d["miou"] == 1.0


class TestOdr:
    def test_values(self):
        assert odr(10, 10) == 1.0
        assert odr(97, 100) == 0.97
        assert odr(0, 5) == 0.0
        assert odr(110, 100) == pytest.approx(1.1)

    def test_validation(self):
        with pytest.raises(DataError):
            odr(5, 0)
        with pytest.raises(DataError):
            odr(-1, 10)


def episode(status="success", final=(0.0, 0.0), n_attempts=1, query="q"):
    attempts = tuple(
        Attempt(anchor_id=i, score=0.9, outcome="matched" if status == "success" else "no_match")
        for i in range(n_attempts)
    )
    return NavigationEpisode(
        query_text=query,
        strategy="updated",
        attempt_limit=3,
        pinned_score=0.9,
        attempts=attempts,
        status=status,
        final_position=final,
        claimed_position=final if status == "success" else None,
        seed=0,
    )


class TestSuccessRate:
    def test_all_success(self):
        eps = [episode(final=(0.2, 0.0), query=f"q{i}") for i in range(4)]
        gt = {f"q{i}": (0.0, 0.0) for i in range(4)}
        assert success_rate(eps, gt) == 1.0

    def test_success_beyond_one_meter_is_failure(self):
        ep = episode(final=(1.2, 0.0))
        assert success_rate([ep], {"q": (0.0, 0.0)}) == 0.0
        near = episode(final=(0.8, 0.0))
        assert success_rate([near], {"q": (0.0, 0.0)}) == 1.0

    def test_attempt_limit_enforced(self):
        ep = episode(final=(0.1, 0.0), n_attempts=4)
        assert success_rate([ep], {"q": (0.0, 0.0)}) == 0.0
        assert success_rate([ep], {"q": (0.0, 0.0)}, attempt_limit=4) == 1.0

    def test_three_of_five(self):
        eps = [
            episode(final=(0.1, 0.0), query="q0"),
            episode(final=(0.0, 0.4), query="q1"),
            episode(final=(0.5, 0.5), query="q2"),
            episode(status="exhausted", final=(0.0, 0.0), query="q3"),
            episode(final=(3.0, 0.0), query="q4"),
        ]
        gt = {f"q{i}": (0.0, 0.0) for i in range(5)}
        assert success_rate(eps, gt) == 0.6

    def test_permutation_invariance(self):
        eps = [
            episode(final=(0.1, 0.0), query="q0"),
            episode(status="exhausted", query="q1"),
            episode(final=(5.0, 0.0), query="q2"),
        ]
        gt = {f"q{i}": (0.0, 0.0) for i in range(3)}
        assert success_rate(eps, gt) == success_rate(list(reversed(eps)), gt)

    def test_validation(self):
        with pytest.raises(DataError):
            success_rate([], {})
        with pytest.raises(DataError):
            success_rate([episode(query="mystery")], {"other": (0, 0)})


class TestFailureKind:
    def test_taxonomy(self):
        assert failure_kind(episode(final=(0.3, 0.0)), (0.0, 0.0)) is None
        assert failure_kind(episode(final=(2.0, 0.0)), (0.0, 0.0)) == "false_match"
        assert failure_kind(episode(status="planning_failure"), (0.0, 0.0)) == "planning"
        assert failure_kind(episode(status="exhausted"), (0.0, 0.0)) == "attempt_limit"


class TestLabeledCloudFromMap:
    def adopt(self, cmap, points, cls, dim=16):
        obs = make_obs(points, axis(dim, 0), cls, 0)
        return cmap.adopt(obs.cloud, [HistoryEntry(0, cls, obs)])

    def test_majority_labels_and_order(self, config16):
        cmap = ConcreteMap(config16)
        self.adopt(cmap, [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], "table")
        self.adopt(cmap, [[5.0, 0.0, 0.0]], "cup")
        cloud = labeled_cloud_from_map(cmap, ("cup", "table"))
        assert len(cloud) == 3
        assert cloud.labels.tolist() == [1, 1, 0]
        assert cloud.class_names == ("cup", "table")

    def test_unlabeled_objects_skipped(self, config16):
        cmap = ConcreteMap(config16)
        self.adopt(cmap, [[0.0, 0.0, 0.0]], None)
        cloud = labeled_cloud_from_map(cmap, ("cup",))
        assert len(cloud) == 0

    def test_unknown_class_rejected(self, config16):
        cmap = ConcreteMap(config16)
        self.adopt(cmap, [[0.0, 0.0, 0.0]], "sofa")
        with pytest.raises(DataError):
            labeled_cloud_from_map(cmap, ("cup", "table"))
