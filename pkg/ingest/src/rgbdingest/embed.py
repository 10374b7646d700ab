"""Feature embedding for fused detections.

Each exported observation carries a single unit feature vector blending the
visual crop embedding with the text embedding of the detection's class. The
blend normalizes both inputs, takes a weighted sum (default 0.7 visual,
0.3 text), and renormalizes. Class-free detections use the null text
feature: the normalized mean of every vocabulary text embedding, which sits
equidistant from the class axes instead of favoring any one of them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DatasetError
from .records import DetectionRecord


def l2_normalize(vec: np.ndarray) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64).reshape(-1)
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / norm


def combine(
    image_feature: np.ndarray,
    text_feature: np.ndarray,
    image_weight: float = 0.7,
    text_weight: float = 0.3,
) -> np.ndarray:
    """Unit-norm weighted blend of the two (normalized) input vectors."""
    img = l2_normalize(image_feature)
    txt = l2_normalize(text_feature)
    if img.shape != txt.shape:
        raise ValueError(f"feature dimensions differ: {img.shape} vs {txt.shape}")
    if image_weight < 0 or text_weight < 0 or image_weight + text_weight == 0:
        raise ValueError("weights must be non-negative and not both zero")
    return l2_normalize(image_weight * img + text_weight * txt)


def null_text_feature(text_features: Sequence[np.ndarray]) -> np.ndarray:
    """Normalized mean of the vocabulary text embeddings."""
    if len(text_features) == 0:
        raise ValueError("vocabulary has no text features")
    stack = np.stack([l2_normalize(t) for t in text_features])
    return l2_normalize(stack.mean(axis=0))


@dataclass(frozen=True)
class Vocabulary:
    """Closed-set class list with per-class text embeddings."""

    classes: tuple
    dim: int
    text_features: tuple

    def __post_init__(self) -> None:
        if len(self.classes) != len(self.text_features):
            raise DatasetError("vocabulary classes and text features differ in length")
        if len(self.classes) == 0:
            raise DatasetError("vocabulary is empty")
        if len(set(self.classes)) != len(self.classes):
            raise DatasetError("vocabulary contains duplicate classes")
        feats = []
        for name, feat in zip(self.classes, self.text_features):
            vec = np.asarray(feat, dtype=np.float64).reshape(-1)
            if vec.shape[0] != self.dim:
                raise DatasetError(
                    f"text feature for {name!r} has dimension {vec.shape[0]}, "
                    f"expected {self.dim}"
                )
            if not np.isfinite(vec).all():
                raise DatasetError(f"text feature for {name!r} is not finite")
            vec.setflags(write=False)
            feats.append(vec)
        object.__setattr__(self, "classes", tuple(str(c) for c in self.classes))
        object.__setattr__(self, "text_features", tuple(feats))

    def text_feature(self, class_id: Optional[str]) -> np.ndarray:
        if class_id is None:
            return null_text_feature(self.text_features)
        try:
            index = self.classes.index(class_id)
        except ValueError:
            raise DatasetError(f"class {class_id!r} not in vocabulary") from None
        return self.text_features[index]


def embed_record(
    record: DetectionRecord,
    vocabulary: Vocabulary,
    image_weight: float = 0.7,
    text_weight: float = 0.3,
) -> np.ndarray:
    """Blend the record's crop feature with its class (or null) text feature."""
    text = vocabulary.text_feature(record.class_id)
    return combine(record.crop_feature, text, image_weight, text_weight)
