"""Atrial volume curves, cycle landmarks, ejection fractions and cohort tests."""
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigError, LandmarkError, NumericError, ShapeError, SliceSelectionError
from .stacks import MaskStack, check_spacing

MIN_PHASES = 8


def select_atrial_slices(lv_flags):
    """Slice indices above the highest ventricular slice (apex -> superior).

    The first index of the returned range is the most basal atrial slice.
    """
    flags = np.asarray(lv_flags, dtype=bool).ravel()
    lv = np.flatnonzero(flags)
    if lv.size == 0:
        raise SliceSelectionError("no ventricular tissue flagged in any slice")
    top = int(lv[-1])
    if top == flags.size - 1:
        raise SliceSelectionError("ventricle reaches the topmost slice; atrial range is empty")
    return range(top + 1, flags.size)


def mask_volume(mask, spacing=None):
    """Foreground volume in mL (voxel count times voxel volume in mm^3 / 1000)."""
    if isinstance(mask, MaskStack):
        spacing = mask.spacing if spacing is None else spacing
        mask = mask.mask
    if spacing is None:
        raise ValueError("mask_volume needs a spacing")
    dx, dy, dz = check_spacing(spacing)
    return int(np.count_nonzero(mask)) * dx * dy * dz / 1000.0


@dataclass(frozen=True)
class VolumeCurve:
    volumes_ml: tuple
    cycle_duration_ms: float | None = None

    def __post_init__(self):
        v = tuple(float(x) for x in self.volumes_ml)
        if not v:
            raise ValueError("volume curve needs at least one phase")
        if not all(np.isfinite(x) and x >= 0 for x in v):
            raise ValueError("volumes must be finite and non-negative")
        object.__setattr__(self, "volumes_ml", v)

    @property
    def phase_count(self):
        return len(self.volumes_ml)

    def as_array(self):
        return np.asarray(self.volumes_ml)


def volume_curve(masks, spacing=None, slices=None, cycle_duration_ms=None):
    """One :func:`mask_volume` per phase.

    ``masks`` is a sequence of per-phase [S, H, W] arrays or MaskStacks;
    ``slices`` optionally restricts the count to a slice index range.
    """
    volumes = []
    shape = None
    for k, m in enumerate(masks):
        sp = spacing
        if isinstance(m, MaskStack):
            if spacing is not None and check_spacing(spacing) != m.spacing:
                raise ShapeError(f"phase {k} spacing {m.spacing} differs from {spacing}")
            sp, m = m.spacing, m.mask
        m = np.asarray(m)
        if shape is None:
            shape = m.shape
        elif m.shape != shape:
            raise ShapeError(f"phase {k} mask dims {m.shape} differ from {shape}")
        if slices is not None:
            m = m[list(slices)]
        volumes.append(mask_volume(m, sp))
    return VolumeCurve(tuple(volumes), cycle_duration_ms)


def atrial_volume_curve(masks, lv_flags, spacing=None):
    """Volume curve restricted to the slices above the ventricle."""
    return volume_curve(masks, spacing, slices=select_atrial_slices(lv_flags))


@dataclass(frozen=True)
class CycleLandmarks:
    max_phase: int
    min_phase: int
    preA_phase: int
    v_max_ml: float
    v_min_ml: float
    v_preA_ml: float

    def __post_init__(self):
        if len({self.max_phase, self.min_phase, self.preA_phase}) != 3:
            raise LandmarkError("landmark phases must be distinct")
        if not self.v_min_ml <= self.v_preA_ml <= self.v_max_ml:
            raise LandmarkError("landmark volumes violate v_min <= v_preA <= v_max")


def cyclic_smooth(values, window):
    """Centred moving average on a cycle; ``window`` must be odd."""
    v = np.asarray(values, dtype=np.float64)
    if window < 1 or window % 2 == 0:
        raise ConfigError("smoothing window must be a positive odd integer")
    if window == 1:
        return v.copy()
    half = window // 2
    padded = np.concatenate([v[-half:], v, v[:half]])
    return np.convolve(padded, np.ones(window) / window, mode="valid")


def find_landmarks(curve, smoothing_window=1):
    """V_max, V_min and V_preA of a cyclic volume curve.

    V_max and V_min are the global extremes. V_preA is the largest local
    maximum met walking forward (cyclically) from the V_max phase to the
    V_min phase, both excluded. Smoothing only affects which indices are
    picked; volumes are read from the raw curve.
    """
    raw = curve.as_array() if isinstance(curve, VolumeCurve) else np.asarray(curve, dtype=np.float64)
    n = raw.size
    if n < MIN_PHASES:
        raise LandmarkError(f"landmark detection needs >= {MIN_PHASES} phases, got {n}")
    s = cyclic_smooth(raw, smoothing_window)
    i_max, i_min = int(np.argmax(s)), int(np.argmin(s))
    if s[i_max] == s[i_min]:
        raise LandmarkError("no atrial kick detected: curve is flat")
    best = None
    i = (i_max + 1) % n
    while i != i_min:
        if s[i] > s[(i - 1) % n] and s[i] >= s[(i + 1) % n]:
            if best is None or s[i] > s[best]:
                best = i
        i = (i + 1) % n
    if best is None:
        raise LandmarkError("no atrial kick detected between the volume maximum and minimum")
    return CycleLandmarks(i_max, i_min, best, float(raw[i_max]), float(raw[i_min]), float(raw[best]))


@dataclass(frozen=True)
class BiomarkerResult:
    ef_percent: float
    aef_percent: float


def ejection_fraction(v_high, v_low):
    """(v_high - v_low) / v_high * 100."""
    if v_high <= 0:
        raise NumericError("ejection fraction needs a positive reference volume")
    return (v_high - v_low) / v_high * 100.0


def ejection_fractions(landmarks):
    """Total (from V_max) and active (from V_preA) ejection fractions."""
    return BiomarkerResult(
        ejection_fraction(landmarks.v_max_ml, landmarks.v_min_ml),
        ejection_fraction(landmarks.v_preA_ml, landmarks.v_min_ml),
    )


@dataclass(frozen=True)
class CohortComparison:
    t: float
    p: float
    df: float
    mean_a: float
    std_a: float
    mean_b: float
    std_b: float
    paired: bool


def cohort_compare(group_a, group_b, paired=False):
    """Two-sided t-test of ``group_a`` against ``group_b``.

    Unpaired uses Welch's unequal-variance test with Welch-Satterthwaite
    degrees of freedom; ``paired=True`` tests the per-pair differences.
    Standard deviations are sample (ddof=1) values.
    """
    a = np.asarray(group_a, dtype=np.float64).ravel()
    b = np.asarray(group_b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least two values")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise NumericError("cohort values must be finite")
    if paired:
        if a.size != b.size:
            raise ValueError(f"paired test needs equal group sizes, got {a.size} and {b.size}")
        d = a - b
        diff, se, df = d.mean(), d.std(ddof=1) / np.sqrt(d.size), d.size - 1.0
    else:
        va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
        diff, se = a.mean() - b.mean(), np.sqrt(va + vb)
        df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1)) if se > 0 else a.size + b.size - 2.0
    if se == 0:
        if diff != 0:
            raise NumericError("groups have zero variance and different means; t is infinite")
        t, p = 0.0, 1.0
    else:
        t = float(diff / se)
        p = float(min(1.0, 2.0 * stats.t.sf(abs(t), df)))
    return CohortComparison(
        t, p, float(df), float(a.mean()), float(a.std(ddof=1)), float(b.mean()), float(b.std(ddof=1)), paired
    )
