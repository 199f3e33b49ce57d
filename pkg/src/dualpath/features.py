"""Feature preprocessing and coding: L2 normalization, PCA, bounding-box
coordinate vectors, single-cluster VLAD, region softmax averaging, and
keyword-based question typing with feature routing.

Everything here is a pure function over numpy arrays; nothing touches the
autodiff machinery.
"""

import enum
import string
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class QuestionType(enum.Enum):
    YES_NO = "yes_no"
    NUMBER = "number"
    OTHER = "other"


@dataclass
class RegionDescriptor:
    """A region's feature vector plus its pixel bounding box."""

    feature: np.ndarray
    bbox: tuple          # (x_min, y_min, x_max, y_max)
    image_size: tuple    # (width, height)

    def __post_init__(self):
        self.feature = np.asarray(self.feature, dtype=np.float64)
        x_min, y_min, x_max, y_max = self.bbox
        width, height = self.image_size
        if not (x_min < x_max <= width):
            raise ValueError(f"invalid x extent: bbox {self.bbox} in image {self.image_size}")
        if not (y_min < y_max <= height):
            raise ValueError(f"invalid y extent: bbox {self.bbox} in image {self.image_size}")


@dataclass
class PcaModel:
    """Mean vector and top-k principal directions (rows, orthonormal)."""

    mean: np.ndarray
    components: np.ndarray  # (k, D)

    @property
    def k(self) -> int:
        return self.components.shape[0]


def l2_normalize(v) -> np.ndarray:
    """v / ||v||_2; rejects the zero vector."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("cannot L2-normalize the zero vector")
    return v / norm


def pca_fit(x, k: int) -> PcaModel:
    """Top-k principal directions via eigendecomposition of the covariance.

    Rows of the result are sorted by descending eigenvalue, and each row's
    sign is fixed so its largest-magnitude entry is positive, making the fit
    deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected an (n, D) matrix, got shape {x.shape}")
    n, dim = x.shape
    if n < 2:
        raise ValueError(f"need at least 2 rows to fit, got {n}")
    if k < 1 or k > min(n - 1, dim):
        raise ValueError(f"k={k} outside valid range 1..{min(n - 1, dim)} for {n}x{dim} data")
    if np.all(x == x[0]):
        raise ValueError("degenerate data: all rows identical")

    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending order
    order = np.argsort(eigvals)[::-1][:k]
    components = eigvecs[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=components)


def pca_transform(model: PcaModel, v) -> np.ndarray:
    """Project a vector (or rows of vectors) onto the principal directions."""
    v = np.asarray(v, dtype=np.float64)
    dim = model.mean.shape[0]
    if v.shape[-1] != dim:
        raise ValueError(f"dimension mismatch: data has {v.shape[-1]}, model expects {dim}")
    return (v - model.mean) @ model.components.T


def save_pca(path, model: PcaModel) -> None:
    np.savez(path, mean=model.mean, components=model.components, k=model.k)


def load_pca(path) -> PcaModel:
    with np.load(path) as data:
        return PcaModel(mean=data["mean"], components=data["components"])


def coordinate_vector(region: RegionDescriptor) -> np.ndarray:
    """8-dim box descriptor (min, max, center, size), normalized to [0, 1]
    by image width/height."""
    x_min, y_min, x_max, y_max = (float(v) for v in region.bbox)
    width, height = (float(v) for v in region.image_size)
    return np.array([
        x_min / width,
        y_min / height,
        x_max / width,
        y_max / height,
        (x_min + x_max) / 2.0 / width,
        (y_min + y_max) / 2.0 / height,
        (x_max - x_min) / width,
        (y_max - y_min) / height,
    ])


def vlad_one_cluster(regions: Sequence, center) -> np.ndarray:
    """Single-cluster VLAD: L2-normalized sum of residuals to the center.

    A zero residual sum (perfect cancellation) encodes as the zero vector
    rather than an error.
    """
    if len(regions) == 0:
        raise ValueError("no regions to encode")
    center = np.asarray(center, dtype=np.float64)
    raw = np.zeros_like(center)
    for r in regions:
        r = np.asarray(r, dtype=np.float64)
        if r.shape != center.shape:
            raise ValueError(f"region shape {r.shape} does not match center shape {center.shape}")
        raw += r - center
    norm = np.linalg.norm(raw)
    return raw / norm if norm > 0.0 else raw


def vlad_center(regions) -> np.ndarray:
    """Cluster center for single-cluster VLAD: k-means with k=1, i.e. the
    plain mean of the training regions."""
    regions = np.asarray(regions, dtype=np.float64)
    if regions.ndim != 2 or regions.shape[0] == 0:
        raise ValueError("need a non-empty (n, d) matrix of region features")
    return regions.mean(axis=0)


def avg_region_softmax(probs: Sequence, expected_count: int) -> np.ndarray:
    """Mean of per-region class distributions; each must sum to 1.

    `expected_count` pins how many regions the pipeline is supposed to
    produce per image; a different count is treated as a data error.
    """
    if len(probs) == 0:
        raise ValueError("no distributions to average")
    if len(probs) != expected_count:
        raise ValueError(f"expected {expected_count} region distributions, got {len(probs)}")
    rows = np.asarray(probs, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("distributions must all have the same length")
    sums = rows.sum(axis=1)
    off = np.abs(sums - 1.0)
    if (off > 1e-6).any():
        i = int(np.argmax(off))
        raise ValueError(f"distribution {i} sums to {sums[i]!r}, not 1")
    return rows.mean(axis=0)


_YES_NO_FIRST_WORDS = frozenset([
    "is", "are", "was", "were", "does", "do", "did",
    "can", "could", "has", "have", "had", "will", "would", "should",
])
_NUMBER_PHRASES = ("how many", "what number")


def classify_question(text: str) -> QuestionType:
    """Keyword-based question typing: number phrases first, then yes/no
    auxiliaries by first word, everything else is OTHER."""
    if not text or not text.strip():
        raise ValueError("question text is empty")
    lowered = text.lower()
    if any(phrase in lowered for phrase in _NUMBER_PHRASES):
        return QuestionType.NUMBER
    first = lowered.split()[0].strip(string.punctuation)
    if first in _YES_NO_FIRST_WORDS:
        return QuestionType.YES_NO
    return QuestionType.OTHER


def route_features(qtype: QuestionType, feat_softmax: np.ndarray,
                   feat_vlad: np.ndarray) -> np.ndarray:
    """Pick the region encoding by question type: averaged softmax for
    yes/no and number questions, VLAD for the rest."""
    if qtype in (QuestionType.YES_NO, QuestionType.NUMBER):
        return feat_softmax
    return feat_vlad
