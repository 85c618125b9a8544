"""Synthetic cine stack with an analytically known atrial volume curve.

The "atrium" is an axis-aligned ellipsoid sitting on the atrioventricular
plane; its semi-axes are scaled per phase so that its exact volume
follows a two-bump cyclic curve (filling peak, then the pre-contraction
peak). A half-ellipsoid "ventricle" fills the slices below the plane so
slice selection has something to find.
"""
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .augmentation import SliceSample
from .errors import ConfigError


@dataclass(frozen=True)
class PhantomSpec:
    v_max: float = 110.0
    v_min: float = 80.0
    v_preA: float = 103.0
    phases: int = 30
    grid: tuple = (64, 64, 44)  # (H, W, slices)
    spacing: tuple = (1.25, 1.25, 2.5)  # (dx, dy, dz) mm
    peak_phases: tuple = (12, 24)  # (V_max phase, V_preA phase)
    peak_width: float = 3.0  # Gaussian sigma, in phases
    shape_ratios: tuple = (1.0, 0.85, 1.15)  # relative semi-axes along x, y, z
    lv_slices: int = 12
    lv_semi_axes: tuple = (20.0, 18.0)  # in-plane LV semi-axes, mm
    noise: float = 0.0
    seed: int = 0
    subject: str = "phantom"
    group: str = "patient"

    def __post_init__(self):
        if not self.v_min < self.v_preA < self.v_max:
            raise ConfigError("phantom needs v_min < v_preA < v_max")
        if self.v_min <= 0:
            raise ConfigError("volumes must be positive")
        if self.phases < 8:
            raise ConfigError("phantom needs at least 8 phases")
        if len(self.grid) != 3 or min(self.grid) < 1:
            raise ConfigError("grid must be (H, W, slices)")
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise ConfigError("spacing must be three positive values")
        p1, p2 = self.peak_phases
        if not (0 <= p1 < self.phases and 0 <= p2 < self.phases and p1 != p2):
            raise ConfigError("peak phases must be distinct phase indices")
        if self.peak_width <= 0 or self.noise < 0 or self.lv_slices < 1:
            raise ConfigError("peak_width, noise and lv_slices out of range")
        if self.group not in ("patient", "volunteer"):
            raise ConfigError("group must be 'patient' or 'volunteer'")

    @classmethod
    def coarse(cls, **kw):
        """10 mm slices, for looking at realistic through-plane voxelization error."""
        kw = {"grid": (64, 64, 11), "spacing": (1.25, 1.25, 10.0), "lv_slices": 3, **kw}
        return cls(**kw)


@dataclass
class Phantom:
    spec: PhantomSpec
    images: list  # per phase, float32 [S, H, W]
    masks: list  # per phase, bool [S, H, W]
    lv_flags: np.ndarray  # bool [S]
    volumes_ml: np.ndarray  # analytic volume per phase
    landmarks: dict  # analytic phases/volumes of max, preA, min

    @property
    def spacing(self):
        return tuple(float(s) for s in self.spec.spacing)

    def slices(self, phases=None, nonempty=False):
        """SliceSample list over the given phases (all by default)."""
        phases = range(self.spec.phases) if phases is None else phases
        dx, dy, _ = self.spacing
        out = []
        for p in phases:
            for k in range(self.images[p].shape[0]):
                if nonempty and not self.masks[p][k].any():
                    continue
                out.append(SliceSample(self.images[p][k], self.masks[p][k], (dx, dy)))
        return out


def cyclic_bump(n, center, width):
    """Unit-height Gaussian bump on a cycle of ``n`` phases."""
    p = np.arange(n, dtype=np.float64)
    g = np.zeros(n)
    for wrap in (-2, -1, 0, 1, 2):
        g += np.exp(-((p - center + wrap * n) ** 2) / (2 * width**2))
    return g / g[int(center)]


def volume_program(spec):
    """Per-phase analytic volume and its landmark phases.

    The curve is ``base + a1*bump(p_max) + a2*bump(p_preA)``; the three
    coefficients are solved so the curve passes through V_max, V_preA and
    V_min, the latter at the curve's own minimum phase (found by fixed-point
    iteration since the minimum location depends on the amplitudes).
    """
    n = spec.phases
    p1, p2 = spec.peak_phases
    g1 = cyclic_bump(n, p1, spec.peak_width)
    g2 = cyclic_bump(n, p2, spec.peak_width)
    p0 = int(np.argmin((spec.v_max - spec.v_min) * g1 + (spec.v_preA - spec.v_min) * g2))
    for _ in range(20):
        m = np.array([[1.0, g1[p1], g2[p1]], [1.0, g1[p2], g2[p2]], [1.0, g1[p0], g2[p0]]])
        base, a1, a2 = np.linalg.solve(m, [spec.v_max, spec.v_preA, spec.v_min])
        curve = base + a1 * g1 + a2 * g2
        new_p0 = int(np.argmin(curve))
        if new_p0 == p0:
            break
        p0 = new_p0
    else:
        raise ConfigError("phantom volume program did not converge")
    curve[p0] = spec.v_min  # exact by construction; drop solver round-off
    if int(np.argmax(curve)) != p1 or a1 <= 0 or a2 <= 0 or base <= 0:
        raise ConfigError("peak configuration does not give a two-peak curve with the max at the first peak")
    if not (curve[p2] > curve[(p2 - 1) % n] and curve[p2] >= curve[(p2 + 1) % n]):
        raise ConfigError("pre-contraction phase is not a local maximum; widen the peak spacing")
    # forward cyclic order must be max -> preA -> min
    if not (p2 - p1) % n < (p0 - p1) % n:
        raise ConfigError("minimum must follow the pre-contraction peak in the cycle")
    landmarks = {
        "max_phase": p1,
        "preA_phase": p2,
        "min_phase": p0,
        "v_max_ml": float(curve[p1]),
        "v_preA_ml": float(curve[p2]),
        "v_min_ml": float(curve[p0]),
    }
    return curve, landmarks


def _semi_axes(volume_ml, ratios):
    scale = (3.0 * volume_ml * 1000.0 / (4.0 * np.pi * np.prod(ratios))) ** (1.0 / 3.0)
    return tuple(scale * r for r in ratios)


def generate_phantom(spec=None):
    spec = PhantomSpec() if spec is None else spec
    h, w, s = spec.grid
    dx, dy, dz = spec.spacing
    volumes, landmarks = volume_program(spec)

    z_base = spec.lv_slices * dz
    cx, cy = w * dx / 2.0, h * dy / 2.0
    a_big, b_big, c_big = _semi_axes(volumes.max(), spec.shape_ratios)
    if a_big > cx or b_big > cy or z_base + 2 * c_big > s * dz:
        raise ConfigError("atrial ellipsoid exceeds the grid; enlarge grid or shrink volumes")
    a_lv, b_lv = spec.lv_semi_axes
    if a_lv > cx or b_lv > cy:
        raise ConfigError("ventricular ellipsoid exceeds the grid")

    z = (np.arange(s) + 0.5) * dz
    y = (np.arange(h) + 0.5) * dy
    x = (np.arange(w) + 0.5) * dx
    zz, yy, xx = np.meshgrid(z, y, x, indexing="ij")

    c_lv = (spec.lv_slices + 0.5) * dz
    lv = (zz < z_base) & (((xx - cx) / a_lv) ** 2 + ((yy - cy) / b_lv) ** 2 + ((zz - z_base) / c_lv) ** 2 <= 1.0)
    lv_flags = lv.any(axis=(1, 2))

    rng = np.random.default_rng(spec.seed)
    texture = gaussian_filter(rng.standard_normal((s, h, w)), sigma=(0, 3, 3))
    texture = 0.12 + 0.06 * texture / (texture.std() + 1e-12)
    lv_signal = 0.55 * gaussian_filter(lv.astype(np.float64), sigma=(0, 0.7, 0.7))

    images, masks = [], []
    for p in range(spec.phases):
        a, b, c = _semi_axes(volumes[p], spec.shape_ratios)
        la = ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2 + ((zz - z_base - c) / c) ** 2 <= 1.0
        img = 0.8 * gaussian_filter(la.astype(np.float64), sigma=(0, 0.7, 0.7)) + lv_signal + texture
        if spec.noise > 0:
            img = img + spec.noise * rng.standard_normal(img.shape)
        images.append(np.clip(img, 0.0, 1.0).astype(np.float32))
        masks.append(la)
    return Phantom(spec, images, masks, lv_flags, volumes, landmarks)
