"""
Patch sampling from labelled volumes.

Draws fixed-size patch boxes for building training sets: part of them are
centered on random foreground voxels, the rest uniformly placed. Each patch
is labelled positive when its center voxel is foreground.
"""

import logging
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ShapeMismatch
from .models import BBox3, Mask3, Shape3

logger = logging.getLogger(__name__)


def classify_patch(patch_bbox: BBox3, label_mask: Mask3) -> bool:
    """True iff the patch's center voxel (midpoint rounded down) is foreground."""
    if not patch_bbox.fits(label_mask.shape):
        raise ShapeMismatch(f"patch {patch_bbox.to_list()} lies outside {label_mask.shape}")
    return bool(label_mask.data[patch_bbox.center])


def _box_around(center: Sequence[int], patch: Shape3, shape: Shape3) -> Tuple[int, ...]:
    # box whose floor midpoint is center, shifted back inside the grid
    return tuple(
        min(max(c - (p - 1) // 2, 0), n - p) for c, p, n in zip(center, patch, shape)
    )


def sample_patches(
    label_mask: Mask3,
    patch_shape: Sequence[int],
    count: int = 4,
    positive_fraction: float = 0.5,
    seed: int = 0,
) -> List[Tuple[BBox3, bool]]:
    """
    Draw patch boxes inside the grid.

    Args:
        label_mask: Ground-truth mask the patches are cut from
        patch_shape: Patch size, clamped to the grid per axis
        count: Number of patches
        positive_fraction: Share of patches centered on foreground voxels;
            ignored when the mask is empty
        seed: Random seed

    Returns:
        (box, classify_patch(box)) pairs in draw order
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if not 0.0 <= positive_fraction <= 1.0:
        raise ValueError(f"positive_fraction must lie in [0, 1], got {positive_fraction}")
    if len(patch_shape) != 3 or any(int(p) < 1 for p in patch_shape):
        raise ValueError(f"patch_shape must be 3 positive integers, got {patch_shape}")

    shape = label_mask.shape
    patch: Shape3 = tuple(min(int(p), n) for p, n in zip(patch_shape, shape))  # type: ignore[assignment]
    rng = np.random.default_rng(seed)
    foreground = np.argwhere(label_mask.data)
    n_positive = 0 if len(foreground) == 0 else int(round(count * positive_fraction))

    samples = []
    for i in range(count):
        if i < n_positive:
            center = foreground[rng.integers(len(foreground))]
            lo = _box_around(center, patch, shape)
        else:
            lo = tuple(int(rng.integers(0, n - p + 1)) for p, n in zip(patch, shape))
        hi = tuple(a + p - 1 for a, p in zip(lo, patch))
        box = BBox3(lo, hi, label_mask.spacing)  # type: ignore[arg-type]
        samples.append((box, classify_patch(box, label_mask)))

    logger.debug(
        "sampled %d patches of %s, %d positive",
        count, patch, sum(1 for _, positive in samples if positive),
    )
    return samples
