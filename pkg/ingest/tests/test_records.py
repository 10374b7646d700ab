"""Detection record and saved-model-output parsing tests."""

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rect_mask, unit
from oracles import decode_rle_brute
from rgbdingest.errors import DatasetError
from rgbdingest.records import (
    CLOSED_SET,
    OPEN_SET,
    DetectionRecord,
    decode_rle,
    encode_rle,
    load_frame_detections,
)

SHAPE = (6, 8)


def make_record(**kwargs):
    defaults = dict(
        bbox=(1, 1, 4, 4),
        mask=rect_mask(SHAPE, 1, 1, 4, 4),
        source=CLOSED_SET,
        crop_feature=unit(3, 8),
        class_id="mug",
        confidence=0.9,
    )
    defaults.update(kwargs)
    return DetectionRecord(**defaults)


def test_rle_basics():
    all_ones = np.ones(SHAPE, dtype=bool)
    assert encode_rle(all_ones) == [0, 48]
    assert decode_rle([0, 48], SHAPE).all()
    all_zeros = np.zeros(SHAPE, dtype=bool)
    assert encode_rle(all_zeros) == [48]
    assert not decode_rle([48], SHAPE).any()
    mask = rect_mask(SHAPE, 2, 0, 5, 1)
    runs = encode_rle(mask)
    assert runs[0] == 2 and sum(runs) == 48
    assert np.array_equal(decode_rle(runs, SHAPE), mask)


def test_rle_error_cases():
    with pytest.raises(DatasetError, match="negative run"):
        decode_rle([-1, 49], SHAPE)
    with pytest.raises(DatasetError, match="sum to"):
        decode_rle([10, 10], SHAPE)
    with pytest.raises(DatasetError, match="sum to"):
        decode_rle([0, 100], SHAPE)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=64), st.integers(1, 8))
def test_rle_round_trip_property(bits, width):
    # Pad to a rectangle so the run lengths cover the full raster.
    height = (len(bits) + width - 1) // width
    flat = np.zeros(height * width, dtype=bool)
    flat[: len(bits)] = bits
    mask = flat.reshape(height, width)
    runs = encode_rle(mask)
    assert sum(runs) == mask.size
    assert np.array_equal(decode_rle(runs, mask.shape), mask)
    assert np.array_equal(decode_rle_brute(runs, mask.shape), mask)


def test_record_validation():
    rec = make_record()
    assert rec.mask_area == 9
    assert not rec.mask.flags.writeable
    assert rec.crop_feature.dtype == np.float64
    with pytest.raises(DatasetError, match="without a class"):
        make_record(class_id=None)
    with pytest.raises(DatasetError, match="must not carry"):
        make_record(source=OPEN_SET, confidence=0.0)
    with pytest.raises(DatasetError, match="unknown detection source"):
        make_record(source="detector")
    with pytest.raises(DatasetError, match="outside"):
        make_record(bbox=(1, 1, 9, 4))
    with pytest.raises(DatasetError, match="outside"):
        make_record(bbox=(4, 1, 4, 4))
    with pytest.raises(DatasetError, match="confidence"):
        make_record(confidence=1.5)
    with pytest.raises(DatasetError, match="finite"):
        make_record(crop_feature=np.array([np.nan] * 8))
    with pytest.raises(DatasetError, match="2-D"):
        make_record(mask=np.zeros(48, dtype=bool))


def open_record():
    return make_record(source=OPEN_SET, class_id=None, confidence=0.0)


def test_open_record_is_class_free():
    rec = open_record()
    assert rec.class_id is None
    assert rec.source == OPEN_SET


def write_detections(path, closed, open_set):
    path.write_text(json.dumps({"closed_set": closed, "open_set": open_set}), encoding="utf-8")


def entry(mask, feature, class_id=None, confidence=None):
    vs, us = np.nonzero(mask)
    e = {
        "bbox": [int(us.min()), int(vs.min()), int(us.max()) + 1, int(vs.max()) + 1],
        "mask_rle": encode_rle(mask),
        "crop_feature": feature.tolist(),
    }
    if class_id is not None:
        e["class_id"] = class_id
        e["confidence"] = confidence
    return e


def test_load_frame_detections(tmp_path):
    path = tmp_path / "000000.json"
    closed_mask = rect_mask(SHAPE, 0, 0, 3, 3)
    open_mask = rect_mask(SHAPE, 4, 2, 7, 5)
    write_detections(
        path,
        [entry(closed_mask, unit(1, 8), "mug", 0.75)],
        [entry(open_mask, unit(2, 8))],
    )
    closed, open_set = load_frame_detections(path, SHAPE, 8, ("mug", "book"))
    assert len(closed) == 1 and len(open_set) == 1
    assert closed[0].class_id == "mug"
    assert closed[0].confidence == 0.75
    assert np.array_equal(closed[0].mask, closed_mask)
    assert open_set[0].class_id is None
    assert np.array_equal(open_set[0].crop_feature, unit(2, 8))


def test_load_rejects_bad_inputs(tmp_path):
    path = tmp_path / "bad.json"
    mask = rect_mask(SHAPE, 0, 0, 3, 3)

    write_detections(path, [entry(mask, unit(1, 8), "sofa", 0.5)], [])
    with pytest.raises(DatasetError, match="not in vocabulary"):
        load_frame_detections(path, SHAPE, 8, ("mug",))

    write_detections(path, [entry(mask, unit(1, 4), "mug", 0.5)], [])
    with pytest.raises(DatasetError, match="dimension 4"):
        load_frame_detections(path, SHAPE, 8, ("mug",))

    write_detections(path, [{"bbox": [0, 0, 1, 1]}], [])
    with pytest.raises(DatasetError, match="malformed"):
        load_frame_detections(path, SHAPE, 8, ("mug",))

    closed_entry = entry(mask, unit(1, 8), "mug", 0.5)
    del closed_entry["confidence"]
    write_detections(path, [closed_entry], [])
    with pytest.raises(DatasetError, match="missing field"):
        load_frame_detections(path, SHAPE, 8, ("mug",))

    path.write_text("[]", encoding="utf-8")
    with pytest.raises(DatasetError, match="JSON object"):
        load_frame_detections(path, SHAPE, 8, ("mug",))

    with pytest.raises(DatasetError, match="unreadable"):
        load_frame_detections(tmp_path / "absent.json", SHAPE, 8, ("mug",))
