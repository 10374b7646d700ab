"""Semantic feature vectors: combination, comparison, synthetic embeddings.

Features are opaque d-dimensional unit vectors produced by some external
encoder. Everything here treats them as plain float64 numpy arrays; any
operation that produces a feature renormalizes to unit L2 norm.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

# Default mixing weights for image/text combination.
IMAGE_WEIGHT = 0.7
TEXT_WEIGHT = 0.3


def as_feature(v: object, dim: Optional[int] = None) -> np.ndarray:
    """Coerce to a read-only float64 vector, optionally checking dimension."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"feature must be a 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"feature dimension {arr.shape[0]} != expected {dim}")
    if not np.isfinite(arr).all():
        raise ValueError("feature contains non-finite values")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def l2_normalize(v: object) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite vector")
    out = arr / norm
    out.setflags(write=False)
    return out


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    if a.shape != b.shape:
        raise ValueError(f"feature dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def combine(
    image_feature: np.ndarray,
    text_feature: np.ndarray,
    image_weight: float = IMAGE_WEIGHT,
    text_weight: float = TEXT_WEIGHT,
) -> np.ndarray:
    """Weighted blend of an image feature and a text feature, renormalized.

    Weights must be non-negative with a positive sum. Raises ValueError when
    the blend cancels to the zero vector (antiparallel inputs with matching
    weights), since no direction is defined there.
    """
    if image_feature.shape != text_feature.shape:
        raise ValueError(
            f"feature dimension mismatch: {image_feature.shape} vs {text_feature.shape}"
        )
    if image_weight < 0 or text_weight < 0 or image_weight + text_weight <= 0:
        raise ValueError("weights must be non-negative and sum to a positive value")
    blended = image_weight * np.asarray(image_feature, dtype=np.float64) + (
        text_weight * np.asarray(text_feature, dtype=np.float64)
    )
    return l2_normalize(blended)


def mean_feature(features: Sequence[np.ndarray]) -> np.ndarray:
    """Normalized mean of a non-empty set of feature vectors.

    Used both as the null-class text fallback (mean over all known class text
    features) and as the anchor template (mean over static-category phrase
    features).
    """
    if len(features) == 0:
        raise ValueError("mean_feature requires at least one vector")
    stacked = np.stack([np.asarray(f, dtype=np.float64) for f in features])
    if stacked.ndim != 2:
        raise ValueError("features must be 1-D vectors of equal dimension")
    return l2_normalize(stacked.mean(axis=0))


class SyntheticVocabulary:
    """Deterministic stand-in for a text/image encoder over a closed class list.

    Each class gets a unit base vector. Classes marked static share a common
    latent axis (strength ``static_strength``) so that a template built from
    the static classes separates them cleanly from volatile classes; base
    vectors are rejection-sampled until all pairwise cosines stay below
    ``similarity_ceiling``. Instance embeddings perturb the class base with
    seeded Gaussian noise and renormalize; noise scale 0 returns the base
    vector exactly.
    """

    def __init__(
        self,
        classes: Sequence[str],
        seed: int,
        dim: int = 512,
        static_classes: Iterable[str] = (),
        noise_scale: float = 0.05,
        similarity_ceiling: float = 0.6,
        static_strength: float = 0.7,
    ) -> None:
        classes = list(classes)
        if len(classes) != len(set(classes)):
            raise ValueError("vocabulary classes must be unique")
        if not classes:
            raise ValueError("vocabulary must contain at least one class")
        if not 0.0 < similarity_ceiling <= 1.0:
            raise ValueError("similarity ceiling must lie in (0, 1]")
        if not 0.0 <= static_strength < 1.0:
            raise ValueError("static strength must lie in [0, 1)")
        self.classes = tuple(classes)
        self.seed = int(seed)
        self.dim = int(dim)
        self.static_classes = frozenset(static_classes)
        unknown_static = self.static_classes - set(self.classes)
        if unknown_static:
            raise ValueError(f"static classes not in vocabulary: {sorted(unknown_static)}")
        self.noise_scale = float(noise_scale)
        self.similarity_ceiling = float(similarity_ceiling)
        self.static_strength = float(static_strength)
        self._index = {c: i for i, c in enumerate(self.classes)}
        self._bases = self._build_bases()

    def _build_bases(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        axis = l2_normalize(rng.standard_normal(self.dim))
        bases = np.empty((len(self.classes), self.dim), dtype=np.float64)
        for i, cls in enumerate(self.classes):
            strength = self.static_strength if cls in self.static_classes else 0.0
            for attempt in range(200):
                unique = rng.standard_normal(self.dim)
                unique -= np.dot(unique, axis) * axis  # keep the shared axis exclusive
                unique = l2_normalize(unique)
                base = l2_normalize(
                    np.sqrt(max(0.0, 1.0 - strength**2)) * unique + strength * axis
                )
                if i == 0 or np.max(np.abs(bases[:i] @ base)) < self.similarity_ceiling:
                    bases[i] = base
                    break
            else:
                raise ValueError(
                    "could not sample class bases below the similarity ceiling; "
                    "raise the ceiling or the dimension"
                )
        bases.setflags(write=False)
        return bases

    def base(self, class_id: str) -> np.ndarray:
        try:
            row = self._index[class_id]
        except KeyError:
            raise KeyError(f"unknown class {class_id!r}") from None
        vec = self._bases[row]
        vec.setflags(write=False)
        return vec

    def class_index(self, class_id: str) -> int:
        return self._index[class_id]

    def embed(self, class_id: str, instance_seed: int) -> np.ndarray:
        """Instance feature: class base plus seeded unit-scaled Gaussian noise."""
        base = self.base(class_id)
        if self.noise_scale == 0.0:
            return base
        rng = np.random.default_rng((self.seed, self._index[class_id], int(instance_seed)))
        noisy = base + self.noise_scale * rng.standard_normal(self.dim)
        return l2_normalize(noisy)

    def all_bases(self) -> np.ndarray:
        return self._bases

    def null_class_feature(self) -> np.ndarray:
        """Fallback text feature for detections without a class label."""
        return mean_feature(list(self._bases))

    def static_template(self) -> np.ndarray:
        """Template feature separating static (anchor) classes from the rest."""
        static = [self.base(c) for c in self.classes if c in self.static_classes]
        if not static:
            raise ValueError("vocabulary has no static classes to build a template from")
        return mean_feature(static)
