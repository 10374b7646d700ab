"""Map-quality and navigation metrics.

Segmentation quality is scored by transferring predicted labels onto
ground-truth points through nearest-neighbor matching inside a radius;
unmatched ground-truth points count as misclassified. Class means run over
the classes present in ground truth. ODR compares object counts and SR counts
episodes that genuinely stop near the queried target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError
from .navigation import NavigationEpisode


@dataclass(frozen=True)
class LabeledCloud:
    """Points plus integer labels indexing a shared class-name list."""

    points: np.ndarray
    labels: np.ndarray
    class_names: Tuple[str, ...]

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise DataError(f"labeled cloud points must be (N, 3), got {points.shape}")
        if labels.shape != (points.shape[0],):
            raise DataError("labels must align one-to-one with points")
        if not np.isfinite(points).all():
            raise DataError("labeled cloud contains non-finite points")
        if len(labels) and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise DataError("label index outside the class-name list")
        points.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class SegmentationReport:
    class_names: Tuple[str, ...]
    per_class_iou: Dict[str, float]
    per_class_recall: Dict[str, float]
    support: Dict[str, int]
    miou: float
    fmiou: float
    macc: float

    def to_dict(self) -> dict:
        return {
            "per_class_iou": dict(sorted(self.per_class_iou.items())),
            "per_class_recall": dict(sorted(self.per_class_recall.items())),
            "support": dict(sorted(self.support.items())),
            "miou": self.miou,
            "fmiou": self.fmiou,
            "macc": self.macc,
        }


UNMATCHED = -1


def transfer_labels(
    pred: LabeledCloud, gt: LabeledCloud, match_radius: float
) -> np.ndarray:
    """Label for each gt point from its nearest pred point within the radius.

    Returns UNMATCHED (-1) where no predicted point lies close enough.
    """
    if pred.class_names != gt.class_names:
        raise DataError("pred and gt must share one class-name list")
    if match_radius <= 0:
        raise DataError("match_radius must be positive")
    out = np.full(len(gt), UNMATCHED, dtype=np.int64)
    if len(pred) == 0 or len(gt) == 0:
        return out
    tree = cKDTree(pred.points)
    dist, idx = tree.query(gt.points, k=1)
    close = dist <= match_radius
    out[close] = pred.labels[idx[close]]
    return out


def segmentation_metrics(
    pred: LabeledCloud, gt: LabeledCloud, match_radius: float = 0.1
) -> SegmentationReport:
    """mIoU / FmIoU / mAcc over the classes present in ground truth."""
    if len(gt) == 0:
        raise DataError("ground-truth cloud is empty")
    transferred = transfer_labels(pred, gt, match_radius)
    names = gt.class_names
    gt_classes = sorted(set(int(c) for c in gt.labels))

    per_iou: Dict[str, float] = {}
    per_recall: Dict[str, float] = {}
    support: Dict[str, int] = {}
    weighted = 0.0
    for c in gt_classes:
        gt_mask = gt.labels == c
        pred_mask = transferred == c
        tp = int(np.count_nonzero(gt_mask & pred_mask))
        fn = int(np.count_nonzero(gt_mask & ~pred_mask))
        fp = int(np.count_nonzero(~gt_mask & pred_mask))
        union = tp + fn + fp
        iou = tp / union if union else 0.0
        recall = tp / (tp + fn) if (tp + fn) else 0.0
        name = names[c]
        per_iou[name] = iou
        per_recall[name] = recall
        support[name] = int(np.count_nonzero(gt_mask))
        weighted += support[name] * iou

    miou = float(np.mean([per_iou[names[c]] for c in gt_classes]))
    fmiou = float(weighted / len(gt))
    macc = float(np.mean([per_recall[names[c]] for c in gt_classes]))
    return SegmentationReport(
        class_names=names,
        per_class_iou=per_iou,
        per_class_recall=per_recall,
        support=support,
        miou=miou,
        fmiou=fmiou,
        macc=macc,
    )


def odr(pred_object_count: int, gt_object_count: int) -> float:
    """Predicted over ground-truth object count; 1.0 is ideal."""
    if gt_object_count <= 0:
        raise DataError("ground-truth object count must be positive")
    if pred_object_count < 0:
        raise DataError("predicted object count cannot be negative")
    return pred_object_count / gt_object_count


def episode_succeeded(
    episode: NavigationEpisode,
    gt_position: Tuple[float, float],
    radius: float = 1.0,
    attempt_limit: int = 3,
) -> bool:
    """Success means claimed success, truly near the target, within attempts."""
    if episode.status != "success":
        return False
    if len(episode.attempts) > attempt_limit:
        return False
    dx = episode.final_position[0] - gt_position[0]
    dy = episode.final_position[1] - gt_position[1]
    return math.hypot(dx, dy) <= radius


def success_rate(
    episodes: Sequence[NavigationEpisode],
    gt_positions: Mapping[str, Tuple[float, float]],
    radius: float = 1.0,
    attempt_limit: int = 3,
) -> float:
    """Fraction of episodes ending within the radius of their target.

    ``gt_positions`` maps each episode's query text to the target's true
    position after any relocations.
    """
    if not episodes:
        raise DataError("no episodes to score")
    wins = 0
    for ep in episodes:
        if ep.query_text not in gt_positions:
            raise DataError(f"no ground-truth position for query {ep.query_text!r}")
        if episode_succeeded(ep, gt_positions[ep.query_text], radius, attempt_limit):
            wins += 1
    return wins / len(episodes)


def failure_kind(
    episode: NavigationEpisode,
    gt_position: Tuple[float, float],
    radius: float = 1.0,
) -> Optional[str]:
    """Failure taxonomy: false_match, planning, or attempt_limit.

    Returns None for genuine successes. A claimed success that stopped far
    from the true target is a false match; an episode whose every attempt
    failed in the planner is a planning failure; everything else ran out of
    attempts.
    """
    if episode.status == "success":
        dx = episode.final_position[0] - gt_position[0]
        dy = episode.final_position[1] - gt_position[1]
        if math.hypot(dx, dy) <= radius:
            return None
        return "false_match"
    if episode.status == "planning_failure":
        return "planning"
    return "attempt_limit"


def labeled_cloud_from_map(cmap, class_names: Tuple[str, ...]) -> LabeledCloud:
    """Predicted labeled cloud: each object's points under its majority class.

    Objects whose histories never carried a class are left out; their points
    claim no label, so nearby ground truth simply goes unmatched.
    """
    points = []
    labels = []
    index = {name: i for i, name in enumerate(class_names)}
    for oid in sorted(cmap.objects):
        obj = cmap.objects[oid]
        cls = obj.class_id
        if cls is None:
            continue
        if cls not in index:
            raise DataError(f"map object class {cls!r} missing from the class list")
        points.append(obj.cloud.points)
        labels.append(np.full(len(obj.cloud.points), index[cls], dtype=np.int64))
    if points:
        all_points = np.concatenate(points, axis=0)
        all_labels = np.concatenate(labels)
    else:
        all_points = np.zeros((0, 3), dtype=np.float64)
        all_labels = np.zeros(0, dtype=np.int64)
    return LabeledCloud(points=all_points, labels=all_labels, class_names=class_names)
