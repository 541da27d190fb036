"""Keypoint-overlap goodness measures.

KOS is the fraction of an image's keypoints that land inside the union
of its ground-truth boxes (or inside the beta boundary band around
them); MKOS averages KOS over images.
"""

from dataclasses import dataclass
import math


class InvalidBetaError(ValueError):
    pass


@dataclass(frozen=True)
class BoundingBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"degenerate box {self}")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def contains(self, x: float, y: float) -> bool:
        # boundary inclusive
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def strictly_contains(self, x: float, y: float) -> bool:
        return self.xmin < x < self.xmax and self.ymin < y < self.ymax


@dataclass(frozen=True)
class Annotation:
    image_id: str
    boxes: tuple  # of (label, BoundingBox)

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be non-empty")


@dataclass(frozen=True)
class BoundaryBand:
    outer: BoundingBox
    inner: BoundingBox
    beta: float

    def contains(self, x: float, y: float) -> bool:
        # the band is the outer box minus the open interior of the inner
        # box, so points on either boundary (and on the original box edge)
        # count as in-band
        return self.outer.contains(x, y) and not self.inner.strictly_contains(x, y)


def chi(box: BoundingBox, kp) -> int:
    """Indicator: 1 iff the keypoint lies inside the box (edges included)."""
    return 1 if box.contains(kp.x, kp.y) else 0


def boundary_band(box: BoundingBox, beta: float) -> BoundaryBand:
    """Extended/reduced boxes about the same centre whose areas are exactly
    (1+beta) and (1-beta) times the original (sides scaled by sqrt)."""
    if not 0.0 < beta < 1.0:
        raise InvalidBetaError("beta must be in (0, 1)")
    cx = 0.5 * (box.xmin + box.xmax)
    cy = 0.5 * (box.ymin + box.ymax)
    hw = 0.5 * (box.xmax - box.xmin)
    hh = 0.5 * (box.ymax - box.ymin)
    so = math.sqrt(1.0 + beta)
    si = math.sqrt(1.0 - beta)
    outer = BoundingBox(cx - hw * so, cy - hh * so, cx + hw * so, cy + hh * so)
    inner = BoundingBox(cx - hw * si, cy - hh * si, cx + hw * si, cy + hh * si)
    return BoundaryBand(outer=outer, inner=inner, beta=beta)


def kos(ann: Annotation, kps) -> float:
    """Fraction of keypoints inside the union of the annotation's boxes.

    A keypoint covered by several overlapping boxes counts once, keeping
    the score a true fraction in [0, 1].
    """
    if not kps:
        raise ValueError("kos needs a non-empty keypoint list")
    boxes = [b for _, b in ann.boxes]
    inside = sum(1 for kp in kps if any(b.contains(kp.x, kp.y) for b in boxes))
    return inside / len(kps)


def kos_band(ann: Annotation, kps, beta: float) -> float:
    """KOS restricted to the union of per-box boundary bands."""
    if not kps:
        raise ValueError("kos_band needs a non-empty keypoint list")
    bands = [boundary_band(b, beta) for _, b in ann.boxes]
    inside = sum(1 for kp in kps if any(band.contains(kp.x, kp.y) for band in bands))
    return inside / len(kps)


def mkos(scores) -> float:
    """Arithmetic mean of per-image KOS values."""
    scores = list(scores)
    if not scores:
        raise ValueError("mkos needs a non-empty score list")
    return sum(scores) / len(scores)


def mkos_curve(dataset, n_grid, mode: str = "full_box", beta: float = 0.1):
    """MKOS over top-N% keypoints for each N in n_grid.

    `dataset` is a list of (Annotation, keypoints) pairs; images without
    keypoints are skipped and counted. Returns (points, skipped) where
    points is a list of (n_percent, mkos).
    """
    from .keypoints import top_responses

    if mode not in ("full_box", "band"):
        raise ValueError(f"unknown mode {mode!r}")
    usable = [(ann, kps) for ann, kps in dataset if kps]
    skipped = len(dataset) - len(usable)
    if not usable:
        raise ValueError("no image in the dataset has keypoints")
    points = []
    for n in n_grid:
        scores = []
        for ann, kps in usable:
            top = top_responses(kps, n)
            if mode == "full_box":
                scores.append(kos(ann, top))
            else:
                scores.append(kos_band(ann, top, beta))
        points.append((n, mkos(scores)))
    return points, skipped
