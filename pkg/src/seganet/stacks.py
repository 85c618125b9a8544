"""Image and mask stacks with physical voxel spacing.

Stacks are [slices, H, W] arrays ordered apex -> superior. Spacing is
``(dx, dy, dz)`` in mm: dx along columns, dy along rows, dz the slice
thickness.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


def check_spacing(spacing, n=3):
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != n or not all(np.isfinite(s) and s > 0 for s in spacing):
        raise ValueError(f"spacing must be {n} positive values, got {spacing}")
    return spacing


@dataclass(frozen=True)
class ImageStack:
    images: np.ndarray
    spacing: tuple

    def __post_init__(self):
        images = np.asarray(self.images)
        if images.ndim != 3:
            raise ShapeError(f"image stack must be [S, H, W], got {images.shape}")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "spacing", check_spacing(self.spacing))

    @property
    def shape(self):
        return self.images.shape


@dataclass(frozen=True)
class MaskStack:
    mask: np.ndarray
    spacing: tuple

    def __post_init__(self):
        mask = np.asarray(self.mask)
        if mask.ndim == 2:
            mask = mask[None]
        if mask.ndim != 3:
            raise ShapeError(f"mask stack must be [S, H, W], got {mask.shape}")
        if mask.dtype != bool:
            if not np.isin(mask, (0, 1)).all():
                raise ValueError("mask stack must be strictly binary")
            mask = mask.astype(bool)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "spacing", check_spacing(self.spacing))

    @property
    def shape(self):
        return self.mask.shape

    def slice(self, k):
        return MaskStack(self.mask[k : k + 1], self.spacing)
