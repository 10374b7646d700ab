#!/usr/bin/env python3
"""Regenerate the committed desk_scene fixture and its golden stream.

The scene is synthetic so every value is reproducible from closed-form
arithmetic: three fronto-parallel rectangles float in front of a background
plane, and the camera slides sideways along +x with identity rotation. A
pixel (u, v) at translation tx shows the rectangle with depth z whenever

    wx0 <= tx + (u - cx) * z / fx < wx1   and   wy0 <= (v - cy) * z / fy < wy1

and the rectangles occupy disjoint image rows, so there is no occlusion to
model. Saved model outputs are derived from the same coverage sets:

  - "mug" (red): detected twice per frame, the second box inset by one pixel
    with a wrong class at low confidence; the pair overlaps above the bbox
    gate and shares color statistics, so refinement merges it away.
  - "book" (green): detected once per frame.
  - an open-set segment duplicating the mug interior: dropped at fusion.
  - an open-set segment over the blue rectangle (not in the vocabulary):
    retained class-free.

Frame 2 punches five zero-depth holes into the blue segment and every frame
has two zero-depth background pixels, exercising missing-depth skips without
dropping any observation. Six frames at 0.24 m steps put exactly two
keyframes (0 and 5) past the 1.0 m translation gate.

Usage: python3 scripts/make_fixture.py [--check]
  --check  regenerate into a temp directory and compare against the
           committed fixture byte for byte instead of rewriting it.
"""

from __future__ import annotations

import argparse
import filecmp
import json
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from rgbdingest.export import export_dataset  # noqa: E402
from rgbdingest.pnm import write_pgm16, write_ppm  # noqa: E402
from rgbdingest.records import encode_rle  # noqa: E402
from rgbdingest.refine import histogram_intersection, masked_histogram  # noqa: E402

WIDTH, HEIGHT = 48, 36
FX = FY = 40.0
CX, CY = 24.0, 18.0
DEPTH_SCALE = 0.001
BACKGROUND_MM = 3500
FRAMES = 6
STEP = 0.24
DIM = 16

# name, (wx0, wx1), (wy0, wy1), depth in meters, base RGB
BOXES = [
    ("mug", (0.1, 0.9), (-0.2, 0.4), 2.0, (200, 40, 40)),
    ("book", (0.5, 1.5), (-0.875, -0.375), 2.5, (40, 190, 60)),
    ("vase", (0.2, 1.4), (0.75, 1.2), 3.0, (50, 70, 210)),
]
BACKGROUND_RGB = (120, 120, 120)
EXPECTED_AREAS = {"mug": 192, "book": 128, "vase": 96}


def unit(seed: int) -> np.ndarray:
    v = np.random.default_rng(seed).normal(size=DIM)
    return v / np.linalg.norm(v)


CROP = {"mug": unit(101), "book": unit(102), "vase": unit(103),
        "mug_dup": unit(104), "mug_inner": unit(105)}
TEXT = {"mug": unit(201), "book": unit(202)}


def coverage(tx: float, span_x, span_y, z: float) -> np.ndarray:
    us = np.arange(WIDTH, dtype=np.float64)
    vs = np.arange(HEIGHT, dtype=np.float64)
    x = tx + (us - CX) * z / FX
    y = (vs - CY) * z / FY
    cols = (span_x[0] <= x) & (x < span_x[1])
    rows = (span_y[0] <= y) & (y < span_y[1])
    return rows[:, None] & cols[None, :]


def mask_bbox(mask: np.ndarray) -> list:
    vs, us = np.nonzero(mask)
    return [int(us.min()), int(vs.min()), int(us.max()) + 1, int(vs.max()) + 1]


def rect_mask(x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    m = np.zeros((HEIGHT, WIDTH), dtype=bool)
    m[y0:y1, x0:x1] = True
    return m


def detection(mask: np.ndarray, feature: np.ndarray, class_id=None, confidence=None) -> dict:
    entry = {
        "bbox": mask_bbox(mask),
        "mask_rle": encode_rle(mask),
        "crop_feature": feature.tolist(),
    }
    if class_id is not None:
        entry["class_id"] = class_id
        entry["confidence"] = confidence
    return entry


def build_dataset(root: Path) -> None:
    (root / "frames").mkdir(parents=True)
    (root / "model").mkdir()
    (root / "calibration.json").write_text(
        json.dumps(
            {"fx": FX, "fy": FY, "cx": CX, "cy": CY,
             "width": WIDTH, "height": HEIGHT, "depth_scale": DEPTH_SCALE},
            indent=2, sort_keys=True,
        ) + "\n", encoding="utf-8",
    )
    (root / "vocabulary.json").write_text(
        json.dumps(
            {"dim": DIM, "classes": ["mug", "book"],
             "text_features": [TEXT["mug"].tolist(), TEXT["book"].tolist()]},
            indent=2, sort_keys=True,
        ) + "\n", encoding="utf-8",
    )

    rng = np.random.default_rng(7)
    pose_lines = []
    for f in range(FRAMES):
        tx = STEP * f
        pose_lines.append(json.dumps(
            {"frame_id": f, "translation": [tx, 0.0, 0.0],
             "rotation": [1.0, 0.0, 0.0, 0.0]}, sort_keys=True))

        color = np.empty((HEIGHT, WIDTH, 3), dtype=np.int64)
        color[:] = BACKGROUND_RGB
        depth = np.full((HEIGHT, WIDTH), BACKGROUND_MM, dtype=np.uint16)
        masks = {}
        for name, span_x, span_y, z, rgb in BOXES:
            mask = coverage(tx, span_x, span_y, z)
            assert int(mask.sum()) == EXPECTED_AREAS[name], (name, f, int(mask.sum()))
            masks[name] = mask
            color[mask] = rgb
            depth[mask] = round(z / DEPTH_SCALE)
        color += rng.integers(-10, 11, size=color.shape)
        color = np.clip(color, 0, 255).astype(np.uint8)

        # Two background depth holes per frame, five inside the vase on frame 2.
        depth[0, f] = 0
        depth[1, (2 * f) % WIDTH] = 0
        if f == 2:
            vs, us = np.nonzero(masks["vase"])
            depth[vs[:5], us[:5]] = 0

        write_ppm(root / "frames" / f"{f:06d}.color.ppm", color)
        write_pgm16(root / "frames" / f"{f:06d}.depth.pgm", depth)

        mug_box = mask_bbox(masks["mug"])
        dup_mask = rect_mask(mug_box[0] + 1, mug_box[1] + 1, mug_box[2] - 1, mug_box[3] - 1)
        inner_mask = rect_mask(mug_box[0] + 2, mug_box[1] + 1, mug_box[2] - 1, mug_box[3] - 1)

        # The duplicate must clear both refinement gates against the real mug.
        h_real = masked_histogram(color, masks["mug"])
        h_dup = masked_histogram(color, dup_mask)
        assert histogram_intersection(h_real, h_dup) > 0.8, f
        inter = (mug_box[2] - mug_box[0] - 2) * (mug_box[3] - mug_box[1] - 2)
        union = (mug_box[2] - mug_box[0]) * (mug_box[3] - mug_box[1])
        assert inter / union > 0.5, f
        # The inner open segment must exceed the fusion drop gate.
        assert inner_mask.sum() / masks["mug"].sum() > 0.5, f

        (root / "model" / f"{f:06d}.json").write_text(
            json.dumps({
                "closed_set": [
                    detection(masks["mug"], CROP["mug"], "mug", 0.9),
                    detection(dup_mask, CROP["mug_dup"], "book", 0.4),
                    detection(masks["book"], CROP["book"], "book", 0.8),
                ],
                "open_set": [
                    detection(inner_mask, CROP["mug_inner"]),
                    detection(masks["vase"], CROP["vase"]),
                ],
            }, indent=2, sort_keys=True) + "\n", encoding="utf-8",
        )
    (root / "poses.jsonl").write_text("\n".join(pose_lines) + "\n", encoding="utf-8")


def build_all(target: Path) -> None:
    dataset = target / "desk_scene"
    build_dataset(dataset)
    report = export_dataset(dataset, target / "desk_scene.golden.dmos")
    expected = dict(frames=6, observations=18, merged_detections=6,
                    dropped_open_segments=6, dropped_small_observations=0,
                    keyframes=2, records=8)
    actual = {k: getattr(report, k) for k in expected}
    assert actual == expected, actual


def compare_trees(a: Path, b: Path) -> list:
    diffs = []
    left = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    right = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    if left != right:
        return [f"file sets differ: {sorted(set(left) ^ set(right))}"]
    for rel in left:
        if not filecmp.cmp(a / rel, b / rel, shallow=False):
            diffs.append(str(rel))
    return diffs


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--check", action="store_true",
                        help="compare a fresh build against the committed fixture")
    args = parser.parse_args()
    fixtures = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
    if args.check:
        with tempfile.TemporaryDirectory() as tmp:
            build_all(Path(tmp))
            diffs = compare_trees(Path(tmp), fixtures)
        if diffs:
            print("fixture drift detected:")
            for d in diffs:
                print(f"  {d}")
            return 1
        print("committed fixture matches a fresh build")
        return 0
    if fixtures.exists():
        shutil.rmtree(fixtures)
    fixtures.mkdir(parents=True)
    build_all(fixtures)
    print(f"wrote fixture to {fixtures}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
