"""Shared fixtures and hypothesis settings for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from semnav.config import RunConfig
from semnav.features import SyntheticVocabulary, l2_normalize
from semnav.geometry import PointCloud
from semnav.stream import FrameRecord, Observation, yaw_pose

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def unit(v) -> np.ndarray:
    return l2_normalize(np.asarray(v, dtype=np.float64))


def axis(dim: int, i: int) -> np.ndarray:
    e = np.zeros(dim)
    e[i] = 1.0
    return e


def make_obs(points, feature, class_id, timestamp) -> Observation:
    return Observation(
        cloud=PointCloud(np.asarray(points, dtype=np.float64)),
        feature=np.asarray(feature, dtype=np.float64),
        class_id=class_id,
        timestamp=timestamp,
    )


def make_frame(frame_id, observations, pose=None) -> FrameRecord:
    if pose is None:
        pose = yaw_pose(0.0, 0.0, 1.2, 0.0)
    return FrameRecord(frame_id=frame_id, pose=pose, observations=tuple(observations))


def blob(center, n=12, spread=0.06, seed=0) -> np.ndarray:
    """Small deterministic cluster around a center point."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-spread, spread, size=(n, 3)) + np.asarray(center, dtype=np.float64)


@pytest.fixture
def config16() -> RunConfig:
    return RunConfig(dim=16)


@pytest.fixture
def default_config() -> RunConfig:
    return RunConfig()


@pytest.fixture(scope="session")
def vocab6() -> SyntheticVocabulary:
    return SyntheticVocabulary(
        classes=("table", "shelf", "sofa", "cup", "book", "plant"),
        seed=7,
        dim=32,
        static_classes=("table", "shelf", "sofa"),
    )
