"""Gaussian and nonlinear-diffusion scale spaces.

The nonlinear scale space integrates dL/dt = div(c * grad L) with an
explicit 4-neighbour scheme in flux form (Neumann boundaries, so total
intensity is conserved exactly). With c == 1 the scheme reduces to the
heat equation, and diffusion to time t matches a Gaussian blur of
sigma = sqrt(2t); the t = sigma^2 / 2 mapping below is chosen so that
the two scale spaces are directly comparable.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d

MIN_IMAGE_SIZE = 16

CONDUCTIVITY_KINDS = ("pm_g1", "pm_g2", "weickert_g3")


class ImageTooSmallError(ValueError):
    pass


class InvalidParamsError(ValueError):
    pass


def to_gray(arr: np.ndarray) -> np.ndarray:
    """Convert an image array to float64 grayscale in [0, 1].

    8-bit inputs are divided by 255; RGB is reduced with the usual
    0.299/0.587/0.114 luma weights.
    """
    a = np.asarray(arr)
    if a.dtype == np.uint8:
        a = a.astype(np.float64) / 255.0
    else:
        a = a.astype(np.float64)
    if a.ndim == 3:
        if a.shape[2] < 3:
            a = a[:, :, 0]
        else:
            a = 0.299 * a[:, :, 0] + 0.587 * a[:, :, 1] + 0.114 * a[:, :, 2]
    if a.ndim != 2:
        raise ValueError(f"expected 2-D or 3-D image array, got shape {a.shape}")
    return a


def validate_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected 2-D grayscale image, got shape {img.shape}")
    h, w = img.shape
    if h < MIN_IMAGE_SIZE or w < MIN_IMAGE_SIZE:
        raise ImageTooSmallError(
            f"image {w}x{h} is too small; need at least "
            f"{MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE}"
        )
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    return img


@dataclass(frozen=True)
class ScaleSpaceLevel:
    image: np.ndarray
    sigma: float
    time: float
    octave: int
    sublevel: int


@dataclass(frozen=True)
class ScaleSpace:
    levels: tuple
    kind: str  # "gaussian" | "nonlinear"


@dataclass(frozen=True)
class DiffusionParams:
    conductivity_kind: str = "pm_g2"
    k_percentile: float = 70.0
    gradient_presmooth_sigma: float = 1.0
    step_tau: float = 0.2
    octaves: int = 4
    sublevels_per_octave: int = 3
    base_sigma: float = 1.6

    def __post_init__(self):
        if self.conductivity_kind not in CONDUCTIVITY_KINDS:
            raise InvalidParamsError(
                f"unknown conductivity kind {self.conductivity_kind!r}"
            )
        if not 0.0 < self.k_percentile < 100.0:
            raise InvalidParamsError("k_percentile must be in (0, 100)")
        if self.gradient_presmooth_sigma <= 0.0:
            raise InvalidParamsError("gradient_presmooth_sigma must be > 0")
        if not 0.0 < self.step_tau <= 0.25:
            raise InvalidParamsError("step_tau must be in (0, 0.25]")
        if self.octaves < 1 or self.sublevels_per_octave < 1:
            raise InvalidParamsError("octaves and sublevels must be >= 1")
        if self.base_sigma <= 0.0:
            raise InvalidParamsError("base_sigma must be > 0")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled, normalized 1-D Gaussian with radius ceil(4*sigma)."""
    radius = max(1, int(np.ceil(4.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with mirror boundaries.

    Symmetric extension is the convolution counterpart of the zero-flux
    Neumann condition used by the diffusion scheme, so the two agree at
    the image border in the c == 1 limit.
    """
    if sigma <= 0.0:
        return np.array(img, dtype=np.float64)
    k = gaussian_kernel(sigma)
    out = convolve1d(np.asarray(img, dtype=np.float64), k, axis=0, mode="reflect")
    return convolve1d(out, k, axis=1, mode="reflect")


def conductivity(grad_mag, k: float, kind: str):
    """Edge-stopping conductivity g(|grad L|); accepts scalars or arrays."""
    if k <= 0.0:
        raise InvalidParamsError("contrast parameter k must be > 0")
    if kind not in CONDUCTIVITY_KINDS:
        raise InvalidParamsError(f"unknown conductivity kind {kind!r}")
    g = np.asarray(grad_mag, dtype=np.float64)
    r = g / k
    if kind == "pm_g1":
        out = np.exp(-(r**2))
    elif kind == "pm_g2":
        out = 1.0 / (1.0 + r**2)
    else:  # weickert_g3
        with np.errstate(divide="ignore", over="ignore"):
            out = np.where(r == 0.0, 1.0, 1.0 - np.exp(-3.315 / np.maximum(r, 1e-300) ** 8))
    if np.isscalar(grad_mag):
        return float(out)
    return out


def estimate_contrast_k(
    img: np.ndarray, presmooth_sigma: float = 1.0, percentile: float = 70.0
) -> float:
    """Contrast parameter k = given percentile of the nonzero gradient
    magnitudes of the presmoothed image; 0.01 fallback for flat images."""
    if not 0.0 < percentile <= 100.0:
        raise InvalidParamsError("percentile must be in (0, 100]")
    smoothed = gaussian_blur(np.asarray(img, dtype=np.float64), presmooth_sigma)
    gy, gx = np.gradient(smoothed)
    mag = np.hypot(gx, gy).ravel()
    mag = mag[mag > 0.0]
    if mag.size == 0:
        return 0.01
    return float(np.percentile(mag, percentile))


def _image_gradients(img: np.ndarray):
    gy, gx = np.gradient(img)
    return gx, gy


def _diffusion_step(L: np.ndarray, c: np.ndarray, dt: float) -> np.ndarray:
    # Flux form: the flux across each 4-neighbour edge uses the average of
    # the two endpoint conductivities and is applied antisymmetrically, so
    # the pixel sum is conserved exactly (zero flux across the border).
    flux_x = 0.5 * (c[:, 1:] + c[:, :-1]) * (L[:, 1:] - L[:, :-1])
    flux_y = 0.5 * (c[1:, :] + c[:-1, :]) * (L[1:, :] - L[:-1, :])
    out = L.copy()
    out[:, :-1] += dt * flux_x
    out[:, 1:] -= dt * flux_x
    out[:-1, :] += dt * flux_y
    out[1:, :] -= dt * flux_y
    return out


def build_nonlinear_scalespace(
    img: np.ndarray,
    params: DiffusionParams = DiffusionParams(),
    conductivity_override=None,
) -> ScaleSpace:
    """Nonlinear diffusion scale space at sigma_{o,s} = base * 2^(o + s/S).

    All levels stay at the input resolution. `conductivity_override`, if
    given, is called as f(presmoothed_gradient_magnitude) in place of the
    configured conductivity (used to force c == 1 for heat-equation checks).
    """
    img = validate_image(img)
    k = estimate_contrast_k(img, params.gradient_presmooth_sigma, params.k_percentile)

    sigmas = [
        params.base_sigma * 2.0 ** (o + s / params.sublevels_per_octave)
        for o in range(params.octaves)
        for s in range(params.sublevels_per_octave)
    ]

    L = img.copy()
    t_cur = 0.0
    levels = []
    idx = 0
    for o in range(params.octaves):
        for s in range(params.sublevels_per_octave):
            sigma = sigmas[idx]
            idx += 1
            t_target = 0.5 * sigma * sigma
            while t_cur < t_target - 1e-12:
                dt = min(params.step_tau, t_target - t_cur)
                Ls = gaussian_blur(L, params.gradient_presmooth_sigma)
                gx, gy = _image_gradients(Ls)
                mag = np.hypot(gx, gy)
                if conductivity_override is not None:
                    c = np.broadcast_to(
                        np.asarray(conductivity_override(mag), dtype=np.float64),
                        L.shape,
                    )
                else:
                    c = conductivity(mag, k, params.conductivity_kind)
                L = _diffusion_step(L, c, dt)
                t_cur += dt
            levels.append(
                ScaleSpaceLevel(image=L.copy(), sigma=sigma, time=t_target, octave=o, sublevel=s)
            )
    return ScaleSpace(levels=tuple(levels), kind="nonlinear")


def build_gaussian_scalespace(
    img: np.ndarray, octaves: int = 4, sublevels: int = 3, base_sigma: float = 1.6
) -> ScaleSpace:
    """SIFT-style Gaussian pyramid.

    Each octave holds sublevels+1 images at sigma = base * 2^(s/S) relative
    to the octave base; the next octave starts from a 2x downsample of the
    previous octave's last level (whose relative sigma is exactly 2*base).
    Stored sigmas are in original-image coordinates, so they repeat at
    octave boundaries by construction.
    """
    img = validate_image(img)
    if octaves < 1 or sublevels < 1:
        raise InvalidParamsError("octaves and sublevels must be >= 1")
    if base_sigma <= 0.0:
        raise InvalidParamsError("base_sigma must be > 0")

    rel_sigmas = [base_sigma * 2.0 ** (s / sublevels) for s in range(sublevels + 1)]

    levels = []
    base = gaussian_blur(img, base_sigma)
    for o in range(octaves):
        current = base
        for s in range(sublevels + 1):
            if s > 0:
                inc = np.sqrt(rel_sigmas[s] ** 2 - rel_sigmas[s - 1] ** 2)
                current = gaussian_blur(current, inc)
            levels.append(
                ScaleSpaceLevel(
                    image=current.copy(),
                    sigma=rel_sigmas[s] * 2.0**o,
                    time=0.5 * (rel_sigmas[s] * 2.0**o) ** 2,
                    octave=o,
                    sublevel=s,
                )
            )
        # last level has relative sigma 2*base; its 2x downsample is the
        # next octave's base
        base = current[::2, ::2]
        if base.shape[0] < 3 or base.shape[1] < 3:
            break
    return ScaleSpace(levels=tuple(levels), kind="gaussian")
