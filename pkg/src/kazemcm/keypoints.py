"""Scale-space extrema detection and fixed-length descriptors.

KAZE-style detection runs on the nonlinear scale space (determinant of
the Hessian, scale-normalized); SIFT-style detection runs on
difference-of-Gaussians per octave. Descriptors are upright by default.
"""

from dataclasses import dataclass
import math

import numpy as np

from .scalespace import ScaleSpace, InvalidParamsError

MAX_REFINE_ITERS = 5


class KindMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Keypoint:
    x: float  # original-image coordinates
    y: float
    sigma: float
    response: float
    kind: str  # "sift" | "kaze"


@dataclass(frozen=True)
class Descriptor:
    keypoint: Keypoint
    values: np.ndarray  # 128-d for sift, 64-d for kaze


def _sort_by_response(kps):
    # tie-break by (y, x, sigma) for reproducible top-N curves
    return sorted(kps, key=lambda kp: (-kp.response, kp.y, kp.x, kp.sigma))


def _hessian_response(img: np.ndarray, sigma: float) -> np.ndarray:
    gy, gx = np.gradient(img)
    gxy, gxx = np.gradient(gx)
    gyy, _ = np.gradient(gy)
    return sigma * sigma * np.abs(gxx * gyy - gxy * gxy)


def _is_local_max(stack: np.ndarray, i: int, y: int, x: int) -> bool:
    v = stack[i, y, x]
    patch = stack[i - 1 : i + 2, y - 1 : y + 2, x - 1 : x + 2]
    return v >= patch.max() and np.count_nonzero(patch == v) == 1


def _quadratic_refine(stack: np.ndarray, i: int, y: int, x: int):
    """One Newton step on the 3-D quadratic fit around (i, y, x).

    Returns (offset, value_at_offset); offsets are in (level, y, x) order.
    """
    d = stack
    g = np.array(
        [
            0.5 * (d[i + 1, y, x] - d[i - 1, y, x]),
            0.5 * (d[i, y + 1, x] - d[i, y - 1, x]),
            0.5 * (d[i, y, x + 1] - d[i, y, x - 1]),
        ]
    )
    v = d[i, y, x]
    hii = d[i + 1, y, x] + d[i - 1, y, x] - 2 * v
    hyy = d[i, y + 1, x] + d[i, y - 1, x] - 2 * v
    hxx = d[i, y, x + 1] + d[i, y, x - 1] - 2 * v
    hiy = 0.25 * (d[i + 1, y + 1, x] - d[i + 1, y - 1, x] - d[i - 1, y + 1, x] + d[i - 1, y - 1, x])
    hix = 0.25 * (d[i + 1, y, x + 1] - d[i + 1, y, x - 1] - d[i - 1, y, x + 1] + d[i - 1, y, x - 1])
    hyx = 0.25 * (d[i, y + 1, x + 1] - d[i, y + 1, x - 1] - d[i, y - 1, x + 1] + d[i, y - 1, x - 1])
    H = np.array([[hii, hiy, hix], [hiy, hyy, hyx], [hix, hyx, hxx]])
    try:
        offset = -np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        return None, v
    return offset, v + 0.5 * float(g @ offset)


def _refine_extremum(stack: np.ndarray, i: int, y: int, x: int):
    """Iterated sub-pixel refinement; returns (i, y, x, offset, value) or
    None when the fit diverges or leaves the valid grid."""
    n, h, w = stack.shape
    for _ in range(MAX_REFINE_ITERS):
        offset, value = _quadratic_refine(stack, i, y, x)
        if offset is None:
            return i, y, x, np.zeros(3), value
        if np.all(np.abs(offset) <= 0.5):
            return i, y, x, offset, value
        i += int(round(offset[0]))
        y += int(round(offset[1]))
        x += int(round(offset[2]))
        if not (1 <= i < n - 1 and 1 <= y < h - 1 and 1 <= x < w - 1):
            return None
    return None


def detect_kaze(ss: ScaleSpace, threshold: float = 0.001):
    """Hessian-determinant extrema of a nonlinear scale space.

    Response is sigma^2 * |det H|; keypoints are 3x3x3 maxima over space
    and adjacent sublevels, sub-pixel refined, sorted by descending
    response.
    """
    if ss.kind != "nonlinear":
        raise KindMismatchError("detect_kaze needs a nonlinear scale space")
    if len(ss.levels) < 3:
        raise ValueError("need at least 3 scale-space levels")
    if threshold < 0:
        raise InvalidParamsError("threshold must be >= 0")

    h, w = ss.levels[0].image.shape
    sigmas = np.array([lv.sigma for lv in ss.levels])
    stack = np.stack([_hessian_response(lv.image, lv.sigma) for lv in ss.levels])

    kps = []
    for i in range(1, len(ss.levels) - 1):
        plane = stack[i]
        interior = plane[1:-1, 1:-1]
        cand = np.argwhere(interior > threshold)
        for cy, cx in cand:
            y, x = cy + 1, cx + 1
            if not _is_local_max(stack, i, y, x):
                continue
            refined = _refine_extremum(stack, i, y, x)
            if refined is None:
                continue
            ri, ry, rx, off, value = refined
            if value <= threshold:
                continue
            fx = rx + off[2]
            fy = ry + off[1]
            if not (0 <= fx < w and 0 <= fy < h):
                continue
            # geometric interpolation toward the adjacent level sigma
            if off[0] >= 0:
                ratio = sigmas[min(ri + 1, len(sigmas) - 1)] / sigmas[ri]
            else:
                ratio = sigmas[ri] / sigmas[max(ri - 1, 0)]
            sigma = sigmas[ri] * ratio ** off[0] if ratio > 0 else sigmas[ri]
            kps.append(
                Keypoint(x=float(fx), y=float(fy), sigma=float(sigma), response=float(value), kind="kaze")
            )
    return _sort_by_response(kps)


def detect_sift(ss: ScaleSpace, contrast_threshold: float = 0.03, edge_ratio: float = 10.0):
    """Difference-of-Gaussian extrema with contrast and edge rejection.

    Coordinates and sigma are mapped back to original-image resolution;
    response is |refined DoG value|.
    """
    if ss.kind != "gaussian":
        raise KindMismatchError("detect_sift needs a gaussian scale space")
    if edge_ratio <= 0:
        raise InvalidParamsError("edge_ratio must be > 0")

    octaves = {}
    for lv in ss.levels:
        octaves.setdefault(lv.octave, []).append(lv)
    kps = []
    edge_bound = (edge_ratio + 1.0) ** 2 / edge_ratio
    for o, lvls in sorted(octaves.items()):
        if len(lvls) < 4:
            raise ValueError("need at least 4 levels per octave for DoG extrema")
        lvls = sorted(lvls, key=lambda lv: lv.sublevel)
        imgs = [lv.image for lv in lvls]
        dog = np.stack([imgs[s + 1] - imgs[s] for s in range(len(imgs) - 1)])
        n, h, w = dog.shape
        scale = 2.0**o
        sublevels = len(imgs) - 1
        for i in range(1, n - 1):
            plane = np.abs(dog[i])
            cand = np.argwhere(plane[1:-1, 1:-1] > 0.5 * contrast_threshold)
            for cy, cx in cand:
                y, x = cy + 1, cx + 1
                v = dog[i, y, x]
                patch = dog[i - 1 : i + 2, y - 1 : y + 2, x - 1 : x + 2]
                is_max = v >= patch.max() and np.count_nonzero(patch == v) == 1
                is_min = v <= patch.min() and np.count_nonzero(patch == v) == 1
                if not (is_max or is_min):
                    continue
                refined = _refine_extremum(dog, i, y, x)
                if refined is None:
                    continue
                ri, ry, rx, off, value = refined
                if abs(value) < contrast_threshold:
                    continue
                # edge rejection on the refined DoG plane
                d = dog[ri]
                hxx = d[ry, rx + 1] + d[ry, rx - 1] - 2 * d[ry, rx]
                hyy = d[ry + 1, rx] + d[ry - 1, rx] - 2 * d[ry, rx]
                hxy = 0.25 * (
                    d[ry + 1, rx + 1] - d[ry + 1, rx - 1] - d[ry - 1, rx + 1] + d[ry - 1, rx - 1]
                )
                tr = hxx + hyy
                det = hxx * hyy - hxy * hxy
                if det <= 0 or tr * tr / det > edge_bound:
                    continue
                fx = (rx + off[2]) * scale
                fy = (ry + off[1]) * scale
                fh, fw = ss.levels[0].image.shape
                if not (0 <= fx < fw and 0 <= fy < fh):
                    continue
                base = lvls[0].sigma  # already in original-image coords
                sigma = base * 2.0 ** ((ri + off[0] + 0.5) / sublevels)
                kps.append(
                    Keypoint(
                        x=float(fx), y=float(fy), sigma=float(sigma), response=float(abs(value)), kind="sift"
                    )
                )
    return _sort_by_response(kps)


def _nearest_level(ss: ScaleSpace, sigma: float):
    return min(ss.levels, key=lambda lv: abs(math.log(lv.sigma / sigma)))


def _sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    # replicate padding: samples outside the image clamp to the border
    h, w = img.shape
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    return (
        img[y0, x0] * (1 - fy) * (1 - fx)
        + img[y0, x1] * (1 - fy) * fx
        + img[y1, x0] * fy * (1 - fx)
        + img[y1, x1] * fy * fx
    )


def _patch_derivatives(img: np.ndarray, cx: float, cy: float, spacing: float, n: int):
    """First-order derivatives sampled on an n x n grid centred at (cx, cy)."""
    offs = (np.arange(n) - (n - 1) / 2.0) * spacing
    gx_grid, gy_grid = np.meshgrid(offs, offs)
    xs = cx + gx_grid
    ys = cy + gy_grid
    half = 0.5 * spacing
    dx = (_sample_bilinear(img, ys, xs + half) - _sample_bilinear(img, ys, xs - half)) / spacing
    dy = (_sample_bilinear(img, ys + half, xs) - _sample_bilinear(img, ys - half, xs)) / spacing
    return dx, dy, gx_grid, gy_grid


def _normalize(vec: np.ndarray, clip: float | None) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return np.zeros_like(vec)
    vec = vec / norm
    if clip is not None:
        vec = np.minimum(vec, clip)
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            return np.zeros_like(vec)
        vec = vec / norm
    return vec


def _describe_sift(ss: ScaleSpace, kp: Keypoint) -> np.ndarray:
    lv = _nearest_level(ss, kp.sigma)
    scale = 2.0**lv.octave
    cx = kp.x / scale
    cy = kp.y / scale
    sigma_rel = kp.sigma / scale
    n = 16  # 4x4 cells of 4x4 samples spanning a 16-sigma window
    spacing = sigma_rel
    dx, dy, gxg, gyg = _patch_derivatives(lv.image, cx, cy, spacing, n)
    mag = np.hypot(dx, dy)
    ori = np.arctan2(dy, dx) % (2 * np.pi)
    weight = np.exp(-(gxg**2 + gyg**2) / (2 * (0.5 * n * spacing) ** 2))
    wm = mag * weight

    hist = np.zeros((4, 4, 8))
    cell = n // 4
    obin = ori / (2 * np.pi) * 8
    o0 = np.floor(obin).astype(int) % 8
    o1 = (o0 + 1) % 8
    f = obin - np.floor(obin)
    for ci in range(4):
        for cj in range(4):
            sl = (slice(ci * cell, (ci + 1) * cell), slice(cj * cell, (cj + 1) * cell))
            np.add.at(hist[ci, cj], o0[sl].ravel(), (wm[sl] * (1 - f[sl])).ravel())
            np.add.at(hist[ci, cj], o1[sl].ravel(), (wm[sl] * f[sl]).ravel())
    return _normalize(hist.ravel(), clip=0.2)


def _describe_kaze(ss: ScaleSpace, kp: Keypoint) -> np.ndarray:
    lv = _nearest_level(ss, kp.sigma)
    n = 24  # 4x4 cells of 6x6 samples spanning a 12-sigma window
    spacing = kp.sigma / 2.0
    dx, dy, gxg, gyg = _patch_derivatives(lv.image, kp.x, kp.y, spacing, n)
    weight = np.exp(-(gxg**2 + gyg**2) / (2 * (0.5 * n * spacing) ** 2))
    dx = dx * weight
    dy = dy * weight

    cell = n // 4
    vec = np.zeros((4, 4, 4))
    for ci in range(4):
        for cj in range(4):
            sl = (slice(ci * cell, (ci + 1) * cell), slice(cj * cell, (cj + 1) * cell))
            vec[ci, cj] = (dx[sl].sum(), dy[sl].sum(), np.abs(dx[sl]).sum(), np.abs(dy[sl]).sum())
    return _normalize(vec.ravel(), clip=None)


def describe(ss: ScaleSpace, kp: Keypoint) -> Descriptor:
    """Upright descriptor: 128-d SIFT-style or 64-d M-SURF-style vector.

    Flat patches yield the all-zero vector; everything else is
    L2-normalized (SIFT additionally clipped at 0.2 before
    renormalizing, which makes descriptors exactly invariant to affine
    intensity gain).
    """
    expected = "nonlinear" if kp.kind == "kaze" else "gaussian"
    if ss.kind != expected:
        raise KindMismatchError(f"{kp.kind} keypoint needs a {expected} scale space")
    h, w = ss.levels[0].image.shape
    if not (0 <= kp.x < w and 0 <= kp.y < h):
        raise ValueError(f"keypoint ({kp.x}, {kp.y}) outside image {w}x{h}")
    if kp.kind == "sift":
        values = _describe_sift(ss, kp)
    else:
        values = _describe_kaze(ss, kp)
    return Descriptor(keypoint=kp, values=values)


def top_responses(kps, n_percent: float):
    """The ceil(len * n/100) keypoints with highest response; ties broken
    by (y, x, sigma)."""
    if not 0.0 < n_percent <= 100.0:
        raise InvalidParamsError("n_percent must be in (0, 100]")
    if not kps:
        return []
    count = math.ceil(len(kps) * n_percent / 100.0)
    return _sort_by_response(kps)[:count]
