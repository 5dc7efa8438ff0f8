"""
Fixpoint refinement: keep the largest component, re-infer around it.

Each iteration extracts the maximum connected component of the current
mask, grows its bounding box by a fixed number of voxels, reruns the
three-view sliding-window inference on that region and keeps only what the
models find inside it. Far-away false positives fall outside the region
and disappear.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .backends import Backend
from .errors import EmptyMask, InvalidConfig
from .inference import SegConfig, fuse_models, sliding_window_infer
from .models import BBox3, Mask3, Volume3, require_foreground
from .volume import bounding_box

logger = logging.getLogger(__name__)

CONNECTIVITIES = (6, 26)


@dataclass
class FixpointConfig:
    """Configuration for fixpoint refinement."""

    iterations: int = 2
    expand_voxels: int = 5
    connectivity: int = 26

    def __post_init__(self):
        if self.iterations < 0:
            raise InvalidConfig("fixpoint iterations must be >= 0")
        if self.expand_voxels < 0:
            raise InvalidConfig("fixpoint expand_voxels must be >= 0")
        if self.connectivity not in CONNECTIVITIES:
            raise InvalidConfig(f"connectivity must be 6 or 26, got {self.connectivity}")


def _structure(connectivity: int) -> np.ndarray:
    if connectivity not in CONNECTIVITIES:
        raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")
    return ndimage.generate_binary_structure(3, 1 if connectivity == 6 else 3)


def connected_components(mask: Mask3, connectivity: int = 26) -> Tuple[np.ndarray, np.ndarray]:
    """
    Label foreground components.

    Labels run contiguously from 1 in raster scan order of each component's
    first voxel; background is 0.

    Returns:
        (labels, sizes) where sizes[k] is the voxel count of label k + 1
    """
    labels, count = ndimage.label(mask.data, structure=_structure(connectivity))
    sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    return labels.astype(np.int32), sizes.astype(np.int64)


def max_component(mask: Mask3, connectivity: int = 26) -> Mask3:
    """
    Keep only the largest component; ties go to the smallest label.

    Raises:
        EmptyMask: mask has no foreground
    """
    require_foreground(mask)
    labels, sizes = connected_components(mask, connectivity)
    keep = int(np.argmax(sizes)) + 1
    return Mask3(labels == keep, mask.spacing)


def expand_region(mask: Mask3, n: int) -> BBox3:
    """
    Bounding box of the foreground grown by n voxels per face, clamped.

    Raises:
        EmptyMask: mask has no foreground
    """
    if n < 0:
        raise ValueError("expansion must be >= 0")
    return bounding_box(mask).expand(n, mask.shape)


def reinfer_region(
    vol: Volume3,
    region: BBox3,
    backends: Sequence[Backend],
    seg_cfg: SegConfig,
) -> Mask3:
    """Fused fine-stage prediction inside region, background elsewhere."""
    probs = sliding_window_infer(vol.crop(region), backends, seg_cfg)
    fused = fuse_models(probs, seg_cfg.threshold, vol.spacing)
    full = np.zeros(vol.shape, dtype=np.uint8)
    full[region.slices] = fused.data
    return Mask3(full, vol.spacing)


def fixpoint_refine(
    vol: Volume3,
    mask: Mask3,
    backends: Sequence[Backend],
    cfg: FixpointConfig,
    seg_cfg: SegConfig,
    bounds: Optional[BBox3] = None,
) -> Mask3:
    """
    Iterate max component -> region expansion -> re-inference.

    When bounds is given the expanded region is clipped to it. If a step
    yields an empty mask, refinement stops with a warning and the last
    non-empty mask is returned.
    """
    if mask.shape != vol.shape:
        raise ValueError(f"mask shape {mask.shape} does not match volume {vol.shape}")
    current = mask
    for iteration in range(cfg.iterations):
        try:
            component = max_component(current, cfg.connectivity)
        except EmptyMask:
            warnings.warn("fixpoint refinement got an empty mask; stopping", RuntimeWarning)
            logger.warning("fixpoint iteration %d: empty input mask", iteration + 1)
            return current
        region = expand_region(component, cfg.expand_voxels)
        if bounds is not None:
            region = region.intersect(bounds)
        refined = reinfer_region(vol, region, backends, seg_cfg)
        logger.info(
            "fixpoint iteration %d: kept %d of %d voxels, region %s, result %d voxels",
            iteration + 1,
            component.foreground_count,
            current.foreground_count,
            region.to_list(),
            refined.foreground_count,
        )
        if refined.is_empty:
            warnings.warn(
                f"fixpoint iteration {iteration + 1} produced an empty mask; "
                "keeping the previous one",
                RuntimeWarning,
            )
            logger.warning("fixpoint iteration %d: re-inference empty", iteration + 1)
            return current
        current = refined
    return current
