"""Shared helpers for the ingest test suite."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

FIXTURES = Path(__file__).resolve().parent / "fixtures"
DATASET = FIXTURES / "desk_scene"
GOLDEN = FIXTURES / "desk_scene.golden.dmos"


def unit(seed: int, dim: int = 16) -> np.ndarray:
    v = np.random.default_rng(seed).normal(size=dim)
    return v / np.linalg.norm(v)


def rect_mask(shape, x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    m[y0:y1, x0:x1] = True
    return m


def flat_image(shape, rgb) -> np.ndarray:
    img = np.empty((shape[0], shape[1], 3), dtype=np.uint8)
    img[:] = rgb
    return img


@pytest.fixture
def dataset_dir() -> Path:
    assert DATASET.is_dir(), "run ingest/scripts/make_fixture.py first"
    return DATASET


@pytest.fixture
def golden_path() -> Path:
    assert GOLDEN.is_file(), "run ingest/scripts/make_fixture.py first"
    return GOLDEN
