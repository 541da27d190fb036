"""Synthetic image corpora shared by the test suite.

All generators are seeded and quantize to 8-bit so flat regions have
exactly zero gradient, which is what keeps the contrast estimate of the
diffusion honest.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from kazemcm.kosmetrics import Annotation, BoundingBox
from kazemcm.scalespace import gaussian_blur


def quantize(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(img * 255) / 255, 0.0, 1.0)


def gaussian_blob(size=64, cx=32.0, cy=32.0, sigma=4.0, amp=0.8, floor=0.1):
    yy, xx = np.mgrid[0:size, 0:size]
    return floor + amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma * sigma))


def boundary_image(seed: int, size: int = 96):
    """Star-shaped bright object on a background of moderate-contrast dots.

    The dots bait the difference-of-Gaussians detector while diffusing
    away in the nonlinear scale space; the strong, curved object boundary
    is what survives diffusion. Returns (image, annotation) with the
    exact bounding box of the object.
    """
    rng = np.random.default_rng(seed)
    img = np.full((size, size), 0.5)
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(40):
        cx, cy = rng.uniform(4, size - 4, 2)
        sb = rng.uniform(1.5, 2.5)
        amp = rng.uniform(0.10, 0.18) * rng.choice([-1, 1])
        img = img + amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sb * sb))
    ocx, ocy = rng.uniform(size * 0.35, size * 0.65, 2)
    r0 = rng.uniform(14, 18)
    theta = np.arctan2(yy - ocy, xx - ocx)
    rr = np.hypot(xx - ocx, yy - ocy)
    radius = r0 * (1 + 0.25 * np.cos(5 * theta + rng.uniform(0, 2 * np.pi)))
    inside = rr <= radius
    img = np.where(inside, 0.95, img)
    img = quantize(img)
    ys, xs = np.nonzero(inside)
    box = BoundingBox(float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()))
    return img, Annotation(image_id=f"boundary_{seed}", boxes=(("object", box),))


def dot_image(polarity: int, seed: int, size: int = 64, ndots: int = 12):
    """Blob-rich image: dots are strong responders for both detectors,
    and the dot polarity (bright vs dark) separates the two classes."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    img = np.full((size, size), 0.5)
    for _ in range(ndots):
        cx, cy = rng.uniform(6, size - 6, 2)
        sb = rng.uniform(2.0, 3.0)
        img = img + polarity * 0.35 * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sb * sb))
    return quantize(np.clip(img, 0.0, 1.0))


SHAPES = ("disk", "square", "triangle", "star", "ring")
STRIPES = ("h", "v")


def _shape_mask(kind: str, rng: np.random.Generator, size: int):
    yy, xx = np.mgrid[0:size, 0:size]
    cx, cy = rng.uniform(size * 0.4, size * 0.6, 2)
    r = rng.uniform(14, 19)
    if kind == "disk":
        return np.hypot(xx - cx, yy - cy) <= r
    if kind == "square":
        return (np.abs(xx - cx) <= r * 0.85) & (np.abs(yy - cy) <= r * 0.85)
    if kind == "triangle":
        return (yy - cy <= r * 0.7) & (yy - cy >= -r) & (np.abs(xx - cx) <= (yy - cy + r) * 0.6)
    if kind == "star":
        th = np.arctan2(yy - cy, xx - cx)
        rr = np.hypot(xx - cx, yy - cy)
        return rr <= r * (1 + 0.3 * np.cos(5 * th)) * 0.8
    if kind == "ring":
        rr = np.hypot(xx - cx, yy - cy)
        return (rr <= r) & (rr >= r * 0.55)
    raise ValueError(kind)


def class_image(shape: str, stripes: str, seed: int, size: int = 64) -> np.ndarray:
    """One image of the shape-x-texture classification corpus."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    bg = 0.45 + 0.1 * (gaussian_blur(rng.random((size, size)), 2.0) - 0.5)
    mask = _shape_mask(shape, rng, size)
    coord = yy if stripes == "h" else xx
    tex = 0.75 + 0.2 * np.sin(coord * 1.1 + rng.uniform(0, 2 * np.pi))
    return quantize(np.where(mask, tex, bg))


def write_class_corpus(root, shapes=SHAPES, stripes=STRIPES, per_class=40, size=64):
    """Write the class_folders corpus to disk; returns the class names."""
    root = Path(root)
    classes = []
    idx = 0
    for shape in shapes:
        for s in stripes:
            cls = f"{shape}_{s}"
            d = root / cls
            d.mkdir(parents=True, exist_ok=True)
            for i in range(per_class):
                img = class_image(shape, s, seed=idx * 1000 + i, size=size)
                Image.fromarray((img * 255).astype(np.uint8)).save(d / f"{cls}_{i:03d}.png")
            classes.append(cls)
            idx += 1
    return classes
