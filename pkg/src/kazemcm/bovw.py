"""Bag-of-visual-words: k-means codebooks, histogram encoding, fusion.

Codebooks are learned per descriptor kind (SIFT and KAZE vectors have
different lengths); an image's two histograms are fused by weighted
concatenation [w * H_sift, (1-w) * H_kaze].
"""

from dataclasses import dataclass
import struct

import numpy as np

MAGIC = b"BVW1"
KIND_BYTES = {"sift": 0, "kaze": 1}
BYTE_KINDS = {v: k for k, v in KIND_BYTES.items()}


class KindMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray  # (k, d)
    kind: str
    seed: int
    inertia: float


@dataclass(frozen=True)
class WordHistogram:
    values: np.ndarray  # L1-normalized counts, or all-zero if no descriptors
    kind: str


@dataclass(frozen=True)
class FusedVector:
    values: np.ndarray
    weight: float


def _as_matrix(descriptors):
    """Stack Descriptor objects (or accept a plain (n, d) array)."""
    if isinstance(descriptors, np.ndarray):
        return np.asarray(descriptors, dtype=np.float64), None
    if not descriptors:
        return np.zeros((0, 0)), None
    kind = descriptors[0].keypoint.kind
    mat = np.stack([np.asarray(d.values, dtype=np.float64) for d in descriptors])
    return mat, kind


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # squared Euclidean; argmin breaks ties toward the lowest index
    d2 = (
        (points**2).sum(axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + (centroids**2).sum(axis=1)[None, :]
    )
    return np.argmin(d2, axis=1)


def _inertia(points, centroids, labels) -> float:
    diff = points - centroids[labels]
    return float((diff**2).sum())


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def build_codebook(descriptors, k: int, seed: int, max_iters: int = 100) -> Codebook:
    """Deterministic k-means (k-means++ seeding, Lloyd iterations).

    Runs until the assignment reaches a fixpoint or max_iters; empty
    clusters are reseeded to the point currently farthest from its own
    centroid. Inertia is asserted non-increasing on every iteration.
    """
    points, kind = _as_matrix(descriptors)
    if k < 2:
        raise ValueError("k must be >= 2")
    if points.shape[0] < k:
        raise ValueError(f"need at least k={k} descriptors, got {points.shape[0]}")
    if kind is None:
        kind = "sift"

    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(points, k, rng)
    labels = _assign(points, centroids)
    inertia = _inertia(points, centroids, labels)

    for _ in range(max_iters):
        new_centroids = centroids.copy()
        for j in range(k):
            members = points[labels == j]
            if members.shape[0] > 0:
                new_centroids[j] = members.mean(axis=0)
        # reseed empty clusters to the globally worst-fit point
        dist2 = ((points - new_centroids[labels]) ** 2).sum(axis=1)
        for j in range(k):
            if not np.any(labels == j):
                far = int(np.argmax(dist2))
                new_centroids[j] = points[far]
                dist2[far] = 0.0
        new_labels = _assign(points, new_centroids)
        new_inertia = _inertia(points, new_centroids, new_labels)
        assert new_inertia <= inertia + 1e-9 * max(1.0, inertia), "k-means inertia increased"
        centroids, inertia = new_centroids, new_inertia
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    return Codebook(centroids=centroids, kind=kind, seed=seed, inertia=inertia)


def encode(descriptors, cb: Codebook) -> WordHistogram:
    """Hard-assign descriptors to nearest centroids; L1-normalized counts.

    An empty descriptor list encodes to the all-zero histogram.
    """
    points, kind = _as_matrix(descriptors)
    if kind is not None and kind != cb.kind:
        raise KindMismatchError(f"{kind} descriptors vs {cb.kind} codebook")
    k = cb.centroids.shape[0]
    if points.shape[0] == 0:
        return WordHistogram(values=np.zeros(k), kind=cb.kind)
    labels = _assign(points, cb.centroids)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    return WordHistogram(values=counts / counts.sum(), kind=cb.kind)


def fuse(h_sift: WordHistogram, h_kaze: WordHistogram, w: float = 0.5) -> FusedVector:
    """Weighted concatenation [w * H_sift, (1-w) * H_kaze]."""
    if not 0.0 <= w <= 1.0:
        raise ValueError("fusion weight must be in [0, 1]")
    if h_sift.kind != "sift" or h_kaze.kind != "kaze":
        raise KindMismatchError("fuse expects (sift, kaze) histograms in that order")
    values = np.concatenate([w * h_sift.values, (1.0 - w) * h_kaze.values])
    return FusedVector(values=values, weight=w)


def save_codebook(cb: Codebook, path):
    """Binary format: magic BVW1, kind byte, u32 k, u32 d, u64 seed, then
    k*d little-endian f32 centroid values."""
    k, d = cb.centroids.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<BIIQ", KIND_BYTES[cb.kind], k, d, cb.seed))
        f.write(cb.centroids.astype("<f4").tobytes())


def load_codebook(path) -> Codebook:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"bad codebook magic {magic!r}")
        kind_b, k, d, seed = struct.unpack("<BIIQ", f.read(17))
        data = np.frombuffer(f.read(4 * k * d), dtype="<f4").astype(np.float64)
    centroids = data.reshape(k, d)
    return Codebook(centroids=centroids, kind=BYTE_KINDS[kind_b], seed=seed, inertia=0.0)
