"""Overlap and surface-distance metrics in physical units.

Distances are measured between boundary voxel centres. A foreground voxel
is on the boundary when one of its face neighbours (4 in-plane plus the 2
through-plane ones) lies inside the array and is background; neighbours
outside the array are ignored. A non-empty mask without any such voxel
(for instance a completely filled array) falls back to all its voxels so
that distances stay defined.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ShapeError, UndefinedMetricError
from .stacks import MaskStack


def _as_stack(m, spacing=None):
    if isinstance(m, MaskStack):
        return m
    return MaskStack(np.asarray(m), (1.0, 1.0, 1.0) if spacing is None else spacing)


def _pair(a, b):
    a, b = _as_stack(a), _as_stack(b)
    if a.shape != b.shape:
        raise ShapeError(f"mask dims differ: {a.shape} vs {b.shape}")
    return a, b


def dice_coefficient(a, b):
    """2|A and B| / (|A| + |B|); 1.0 when both masks are empty."""
    a, b = _pair(a, b)
    total = int(a.mask.sum()) + int(b.mask.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a.mask, b.mask).sum()) / total


def boundary_mask(mask):
    """Boolean array of boundary voxels of a [S, H, W] mask."""
    m = np.asarray(mask, dtype=bool)
    exposed = np.zeros_like(m)
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        exposed[lo] |= ~m[hi]  # neighbour at +1 is background
        exposed[hi] |= ~m[lo]  # neighbour at -1 is background
    edge = m & exposed
    if m.any() and not edge.any():
        return m.copy()
    return edge


def boundary_points(mask):
    """Boundary voxel centres in mm as an [n, 3] array of (x, y, z)."""
    stack = _as_stack(mask)
    dx, dy, dz = stack.spacing
    k, i, j = np.nonzero(boundary_mask(stack.mask))
    return np.stack([j * dx, i * dy, k * dz], axis=1).astype(np.float64)


def directed_distances(a_points, b_points):
    """Distance from each point of ``a`` to the nearest point of ``b``."""
    if len(a_points) == 0 or len(b_points) == 0:
        raise UndefinedMetricError("distance to an empty point set is undefined")
    return np.sqrt(_kernels.min_sq_dist(a_points, b_points))


def _both_ways(a, b):
    a, b = _pair(a, b)
    if a.spacing != b.spacing:
        raise ShapeError(f"mask spacings differ: {a.spacing} vs {b.spacing}")
    if not a.mask.any() or not b.mask.any():
        raise UndefinedMetricError("surface distance needs two non-empty masks")
    pa, pb = boundary_points(a), boundary_points(b)
    return directed_distances(pa, pb), directed_distances(pb, pa)


def hausdorff_distance(a, b):
    """Symmetric Hausdorff distance (mm) between the boundaries of two masks."""
    ab, ba = _both_ways(a, b)
    return float(max(ab.max(), ba.max()))


def median_contour_distance(a, b):
    """Median over both directed boundary-distance sets pooled together (mm)."""
    ab, ba = _both_ways(a, b)
    return float(np.median(np.concatenate([ab, ba])))


@dataclass(frozen=True)
class SliceMetrics:
    index: int
    dice: float
    hausdorff_mm: float | None
    mcd_mm: float | None


@dataclass(frozen=True)
class MetricsReport:
    """Whole-stack metrics plus per-slice 2D values.

    Distance fields are ``None`` when undefined (one of the masks empty).
    """

    dice: float
    hausdorff_mm: float | None
    mcd_mm: float | None
    slices: list = field(default_factory=list)

    def as_row(self):
        return {"dice": self.dice, "hd_mm": self.hausdorff_mm, "mcd_mm": self.mcd_mm}


def _distances_or_none(a, b):
    try:
        return hausdorff_distance(a, b), median_contour_distance(a, b)
    except UndefinedMetricError:
        return None, None


def compare_stacks(pred, gt):
    """Dice, Hausdorff and MCD of ``pred`` against ``gt`` in 3D and per slice.

    Slices where both masks are empty are left out of the breakdown.
    """
    pred, gt = _as_stack(pred), _as_stack(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"mask dims differ: {pred.shape} vs {gt.shape}")
    if pred.spacing != gt.spacing:
        raise ShapeError(f"mask spacings differ: {pred.spacing} vs {gt.spacing}")
    per_slice = []
    for k in range(pred.shape[0]):
        p, g = pred.slice(k), gt.slice(k)
        if not p.mask.any() and not g.mask.any():
            continue
        hd, mcd = _distances_or_none(p, g)
        per_slice.append(SliceMetrics(k, dice_coefficient(p, g), hd, mcd))
    hd, mcd = _distances_or_none(pred, gt)
    return MetricsReport(dice_coefficient(pred, gt), hd, mcd, per_slice)
