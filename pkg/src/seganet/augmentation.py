"""Stochastic augmentations for (image, mask) slice pairs.

Geometric transforms are expressed as a map from output pixel to source
coordinates; the same map samples the image bilinearly and the mask with
nearest neighbour, so the mask stays binary and aligned with the image.
Intensity transforms never touch the mask.
"""
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class SliceSample:
    image: np.ndarray
    mask: np.ndarray
    in_plane_spacing: tuple = (1.0, 1.0)  # (dx, dy) mm

    def __post_init__(self):
        image = np.asarray(self.image)
        mask = np.asarray(self.mask)
        if image.ndim != 2 or image.shape != mask.shape:
            raise ShapeError(f"image {image.shape} and mask {mask.shape} must be matching 2-D arrays")
        if not np.isfinite(image).all():
            raise ValueError("image contains non-finite values")
        if mask.dtype != np.uint8:
            if not np.isin(mask, (0, 1)).all():
                raise ValueError("mask must be strictly binary")
            mask = mask.astype(np.uint8)
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "in_plane_spacing", tuple(float(s) for s in self.in_plane_spacing))


FAMILIES = ("rigid", "crop", "noise", "kspace", "ffd", "intensity")


@dataclass(frozen=True)
class AugmentSpec:
    p_rigid: float = 0.5
    p_crop: float = 0.5
    p_noise: float = 0.5
    p_kspace: float = 0.5
    p_ffd: float = 0.5
    p_intensity: float = 0.5
    rotation_deg: float = 15.0
    translation: float = 0.10
    flip_p: float = 0.5
    crop_range: tuple = (0.8, 1.0)
    noise_sigma: tuple = (0.0, 0.1)
    kspace_fraction: tuple = (0.0, 0.1)
    ffd_grid: int = 5
    ffd_max_displacement: float = 0.05  # fraction of the image extent
    intensity_range: tuple = (0.7, 1.3)
    seed: int = 0

    def __post_init__(self):
        for fam in FAMILIES:
            p = getattr(self, f"p_{fam}")
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"p_{fam} must lie in [0, 1]")
        if not 0.0 <= self.flip_p <= 1.0:
            raise ConfigError("flip_p must lie in [0, 1]")
        for name in ("crop_range", "noise_sigma", "kspace_fraction", "intensity_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} is not ordered: {lo} > {hi}")
        if not (0.5 <= self.crop_range[0] and self.crop_range[1] <= 1.0):
            raise ConfigError("crop_range must lie within [0.5, 1.0]")
        if self.noise_sigma[0] < 0 or not 0 <= self.kspace_fraction[0] <= self.kspace_fraction[1] <= 0.2:
            raise ConfigError("noise/k-space ranges out of bounds")
        if not (0.5 <= self.intensity_range[0] and self.intensity_range[1] <= 1.5):
            raise ConfigError("intensity_range must lie within [0.5, 1.5]")
        if self.ffd_grid < 4 or not 0 <= self.ffd_max_displacement <= 0.1:
            raise ConfigError("ffd_grid must be >= 4 and ffd_max_displacement <= 0.1")
        if self.rotation_deg < 0 or self.rotation_deg > 180 or self.translation < 0:
            raise ConfigError("rotation/translation ranges must be non-negative")

    @classmethod
    def disabled(cls, **kw):
        return cls(**{f"p_{fam}": 0.0 for fam in FAMILIES}, **kw)


# -- geometry helpers ---------------------------------------------------------


def _rotation(angle_deg):
    rad = np.deg2rad(angle_deg)
    c, s = np.cos(rad), np.sin(rad)
    # snap so quarter turns map the pixel grid onto itself exactly
    c, s = (float(np.round(v)) if abs(v - np.round(v)) < 1e-12 else float(v) for v in (c, s))
    return c, s


def _rotate_coords(rows, cols, center, angle_deg):
    """Source coordinates for rotating content by ``angle_deg`` about ``center``."""
    c, s = _rotation(angle_deg)
    dr, dc = rows - center[0], cols - center[1]
    return center[0] + c * dr - s * dc, center[1] + s * dr + c * dc


def _resample(sample, coords, mode):
    image = map_coordinates(sample.image, coords, order=1, mode=mode, cval=0.0)
    mask = map_coordinates(sample.mask, coords, order=0, mode=mode, cval=0)
    return image, mask


def rigid_coordinates(shape, angle, shift):
    h, w = shape
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    rows = rows - shift[0] * h
    cols = cols - shift[1] * w
    r, c = _rotate_coords(rows, cols, ((h - 1) / 2.0, (w - 1) / 2.0), angle)
    return np.stack([r, c])


def rigid_augment(sample, angle, shift=(0.0, 0.0), flips=(False, False)):
    """Flip (rows, cols), then rotate by ``angle`` degrees about the centre
    and translate by ``shift`` (fractions of H and W). Zero fill outside.

    Positive angles turn the content clockwise as displayed (row 0 on top).
    """
    if abs(angle) > 180:
        raise ValueError("rotation angle must satisfy |angle| <= 180")
    image, mask = sample.image, sample.mask
    for axis, flag in enumerate(flips):
        if flag:
            image, mask = np.flip(image, axis), np.flip(mask, axis)
    if angle == 0 and shift[0] == 0 and shift[1] == 0:
        return replace(sample, image=np.ascontiguousarray(image), mask=np.ascontiguousarray(mask))
    flipped = replace(sample, image=image, mask=mask)
    coords = rigid_coordinates(image.shape, angle, shift)
    image, mask = _resample(flipped, coords, "constant")
    return replace(sample, image=image, mask=mask)


def crop_coordinates(shape, crop_fraction, angle, offset):
    h, w = shape
    ch, cw = crop_fraction * h, crop_fraction * w
    oy, ox = offset[0] * (h - ch), offset[1] * (w - cw)
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    u = (rows + 0.5) * (ch / h) - 0.5
    v = (cols + 0.5) * (cw / w) - 0.5
    u, v = _rotate_coords(u, v, ((ch - 1) / 2.0, (cw - 1) / 2.0), angle)
    return np.stack([u + oy, v + ox])


def crop_rotate(sample, crop_fraction, angle, offset=(0.5, 0.5)):
    """Crop a window of ``crop_fraction`` of each dim (placed by ``offset``
    in [0, 1]^2, 0.5 = centred), rotate it and resize back to full size.

    The pixel spacing shrinks by ``crop_fraction`` since the same matrix now
    covers a smaller field of view.
    """
    if not 0.5 <= crop_fraction <= 1.0:
        raise ValueError("crop_fraction must lie in [0.5, 1.0]")
    if not (0.0 <= offset[0] <= 1.0 and 0.0 <= offset[1] <= 1.0):
        raise ValueError("crop window exceeds the image: offset must lie in [0, 1]")
    if abs(angle) > 180:
        raise ValueError("rotation angle must satisfy |angle| <= 180")
    if crop_fraction == 1.0 and angle == 0:
        return sample
    coords = crop_coordinates(sample.image.shape, crop_fraction, angle, offset)
    image, mask = _resample(sample, coords, "constant")
    spacing = tuple(s * crop_fraction for s in sample.in_plane_spacing)
    return SliceSample(image, mask, spacing)


def additive_noise(sample, sigma, rng):
    """Add N(0, sigma^2) per pixel and clamp to [0, 1]."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return sample
    noise = rng.normal(0.0, sigma, size=sample.image.shape)
    image = np.clip(sample.image + noise, 0.0, 1.0).astype(sample.image.dtype)
    return replace(sample, image=image)


def corrupt_kspace(image, rows, mode, rng):
    """Magnitude image after corrupting the given k-space rows (no rescaling)."""
    k = np.fft.fft2(image)
    rows = np.asarray(rows, dtype=int)
    if rows.size:
        if np.any(rows == 0):
            raise ValueError("the DC row must not be corrupted")
        if mode == "zero":
            k[rows] = 0
        elif mode == "noise":
            ref = k[1:] if k.shape[0] > 1 else k
            scale = np.sqrt(np.mean(np.abs(ref) ** 2) / 2.0)
            k[rows] = scale * (rng.standard_normal((rows.size, k.shape[1])) + 1j * rng.standard_normal((rows.size, k.shape[1])))
        else:
            raise ValueError(f"unknown k-space corruption mode {mode!r}")
    return np.abs(np.fft.ifft2(k))


def kspace_corrupt(sample, line_fraction, mode="zero", rng=None):
    """Zero or noise-fill a random fraction of phase-encode rows (never the
    DC row), reconstruct the magnitude and rescale it to the input's peak."""
    if not 0.0 <= line_fraction <= 0.2:
        raise ValueError("line_fraction must lie in [0, 0.2]")
    h = sample.image.shape[0]
    n = int(round(line_fraction * h))
    rng = np.random.default_rng() if rng is None else rng
    rows = rng.choice(np.arange(1, h), size=min(n, h - 1), replace=False) if n else np.empty(0, int)
    out = corrupt_kspace(sample.image.astype(np.float64), rows, mode, rng)
    peak_in, peak_out = float(sample.image.max()), float(out.max())
    if peak_out > 0:
        out *= peak_in / peak_out
    image = np.clip(out, 0.0, 1.0).astype(sample.image.dtype)
    return replace(sample, image=image)


def _bspline_weights(n, g):
    """[n, g] matrix of cubic B-spline weights for n pixels and g control points."""
    delta = (n - 1) / (g - 3)
    u = np.arange(n) / delta + 1.0
    i = np.minimum(np.floor(u).astype(int), g - 3)
    t = u - i
    basis = np.stack(
        [
            (1 - t) ** 3 / 6.0,
            (3 * t**3 - 6 * t**2 + 4) / 6.0,
            (-3 * t**3 + 3 * t**2 + 3 * t + 1) / 6.0,
            t**3 / 6.0,
        ],
        axis=1,
    )
    weights = np.zeros((n, g))
    for l in range(4):
        weights[np.arange(n), i - 1 + l] = basis[:, l]
    return weights, delta


def ffd_displacement(shape, grid):
    """Dense (2, H, W) displacement field from a (G, G, 2) control grid.

    Control points sit on a uniform lattice with one extra point beyond the
    image on every side, so each pixel is influenced by a 4x4 neighbourhood.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3 or grid.shape[2] != 2 or grid.shape[0] < 4 or grid.shape[1] < 4:
        raise ValueError("ffd grid must be (G, G, 2) with G >= 4 for cubic B-splines")
    wy, _ = _bspline_weights(shape[0], grid.shape[0])
    wx, _ = _bspline_weights(shape[1], grid.shape[1])
    return np.stack([wy @ grid[:, :, d] @ wx.T for d in range(2)])


def ffd_deform(sample, grid):
    """Warp with a cubic B-spline free-form deformation; ``grid`` holds
    (row, col) control displacements in pixels. Output pixel p samples the
    input at p + u(p), with edge clamping at the border."""
    grid = np.asarray(grid, dtype=np.float64)
    h, w = sample.image.shape
    if grid.ndim == 3 and grid.shape[2] == 2:
        if np.abs(grid[..., 0]).max(initial=0) > 0.1 * h or np.abs(grid[..., 1]).max(initial=0) > 0.1 * w:
            raise ValueError("ffd displacements must not exceed 10% of the image extent")
    disp = ffd_displacement((h, w), grid)
    if not disp.any():
        return sample
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = np.stack([rows + disp[0], cols + disp[1]])
    image, mask = _resample(sample, coords, "nearest")
    return replace(sample, image=image, mask=mask)


def intensity_scale(sample, factor):
    """Multiply intensities by ``factor`` and clamp to [0, 1]."""
    if not 0.5 <= factor <= 1.5:
        raise ValueError("intensity factor must lie in [0.5, 1.5]")
    if factor == 1:
        return sample
    image = np.clip(sample.image * factor, 0.0, 1.0).astype(sample.image.dtype)
    return replace(sample, image=image)


def augment_pipeline(sample, spec, rng):
    """Apply each family with its own probability, in the fixed order
    rigid, crop+rotate, noise, k-space, FFD, intensity."""
    h, w = sample.image.shape
    if rng.random() < spec.p_rigid:
        angle = rng.uniform(-spec.rotation_deg, spec.rotation_deg)
        shift = tuple(rng.uniform(-spec.translation, spec.translation, size=2))
        flips = tuple(bool(f) for f in rng.random(2) < spec.flip_p)
        sample = rigid_augment(sample, angle, shift, flips)
    if rng.random() < spec.p_crop:
        frac = rng.uniform(*spec.crop_range)
        angle = rng.uniform(-spec.rotation_deg, spec.rotation_deg)
        offset = tuple(rng.uniform(0.0, 1.0, size=2))
        sample = crop_rotate(sample, frac, angle, offset)
    if rng.random() < spec.p_noise:
        sample = additive_noise(sample, rng.uniform(*spec.noise_sigma), rng)
    if rng.random() < spec.p_kspace:
        frac = rng.uniform(*spec.kspace_fraction)
        mode = "zero" if rng.random() < 0.5 else "noise"
        sample = kspace_corrupt(sample, frac, mode, rng)
    if rng.random() < spec.p_ffd:
        g = spec.ffd_grid
        amp = spec.ffd_max_displacement
        grid = np.empty((g, g, 2))
        grid[..., 0] = rng.uniform(-amp * h, amp * h, size=(g, g))
        grid[..., 1] = rng.uniform(-amp * w, amp * w, size=(g, g))
        sample = ffd_deform(sample, grid)
    if rng.random() < spec.p_intensity:
        sample = intensity_scale(sample, rng.uniform(*spec.intensity_range))
    return sample
