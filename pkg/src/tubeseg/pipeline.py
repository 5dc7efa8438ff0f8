"""
Two-stage coarse-to-fine segmentation.

    1. coarse: resize the whole volume, infer, threshold, take the bounding
       box, widen it by a fixed margin and map it back to original voxels
    2. fine: sliding-window multi-view inference on the ROI, fused across
       models and embedded into a full-size mask
    3. fixpoint refinement of the embedded mask
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .backends import Backend
from .errors import EmptyPrediction
from .fixpoint import FixpointConfig, fixpoint_refine
from .inference import SegConfig, fuse_models, multiview_infer, sliding_window_infer
from .models import BBox3, Mask3, Volume3
from .volume import bounding_box, resample_trilinear
from .windowing import make_channels

logger = logging.getLogger(__name__)

__all__ = [
    "SegConfig",
    "SegmentationResult",
    "coarse_locate",
    "fuse_models",
    "multiview_infer",
    "restore_box",
    "restore_coordinate",
    "run_segmentation",
    "segment",
    "sliding_window_infer",
]


def restore_coordinate(
    c: int,
    resized_spacing: float,
    original_spacing: float,
    size: Optional[int] = None,
) -> int:
    """
    Map a voxel index from the resized grid back to the original grid.

    original = round(c * resized_spacing / original_spacing), rounding half
    up, clamped to [0, size - 1] when size is given.
    """
    if resized_spacing <= 0 or original_spacing <= 0:
        raise ValueError("spacings must be positive")
    index = int(math.floor(c * resized_spacing / original_spacing + 0.5))
    if size is not None:
        index = min(max(index, 0), size - 1)
    return index


def restore_box(box: BBox3, margin: int, original: Volume3) -> BBox3:
    """
    Widen a resized-grid box by margin voxels per face, then restore it.

    The margin is added before restoration, in resized coordinates.
    """
    lo = tuple(
        restore_coordinate(c - margin, rs, os, n)
        for c, rs, os, n in zip(box.lo, box.frame_spacing, original.spacing, original.shape)
    )
    hi = tuple(
        restore_coordinate(c + margin, rs, os, n)
        for c, rs, os, n in zip(box.hi, box.frame_spacing, original.spacing, original.shape)
    )
    return BBox3(lo, hi, original.spacing)  # type: ignore[arg-type]


def coarse_locate(vol: Volume3, backend: Backend, cfg: SegConfig) -> BBox3:
    """
    Locate the ROI on a resized copy of the volume.

    Returns:
        Inclusive ROI box in original voxel coordinates

    Raises:
        EmptyPrediction: nothing above threshold on the coarse grid
    """
    if int(np.prod(vol.shape)) <= 1:
        raise ValueError("volume must have more than one voxel")
    resized = resample_trilinear(vol, cfg.coarse_shape)
    tensor = make_channels(resized, cfg.windows).as_tensor()
    probs = expit(backend.infer(tensor)[0].astype(np.float64))
    coarse = Mask3(probs > cfg.threshold, resized.spacing)
    if coarse.is_empty:
        raise EmptyPrediction("coarse stage found no foreground above threshold")
    box = bounding_box(coarse)
    roi = restore_box(box, cfg.roi_margin_voxels, vol)
    logger.info("coarse box %s -> roi %s", box.to_list(), roi.to_list())
    return roi


@dataclass
class SegmentationResult:
    """Output of the full pipeline."""

    mask: Mask3
    roi: BBox3
    fine_mask: Mask3


def run_segmentation(
    vol: Volume3,
    coarse_backend: Backend,
    fine_backends: Sequence[Backend],
    cfg: Optional[SegConfig] = None,
    fixpoint_cfg: Optional[FixpointConfig] = None,
) -> SegmentationResult:
    """
    Coarse ROI, fine sliding-window inference, fusion, embedding, fixpoint.

    Args:
        vol: CT volume in HU
        coarse_backend: Model used to locate the ROI
        fine_backends: Models fused by union on the ROI
        cfg: Stage configuration (default SegConfig())
        fixpoint_cfg: Refinement configuration (default FixpointConfig());
            zero iterations skips refinement
    """
    cfg = cfg or SegConfig()
    roi = coarse_locate(vol, coarse_backend, cfg)
    probs = sliding_window_infer(vol.crop(roi), fine_backends, cfg)
    fused = fuse_models(probs, cfg.threshold, vol.spacing)

    embedded = np.zeros(vol.shape, dtype=np.uint8)
    embedded[roi.slices] = fused.data
    fine_mask = Mask3(embedded, vol.spacing)
    logger.info("fine stage: %d foreground voxels", fine_mask.foreground_count)

    fixpoint_cfg = fixpoint_cfg if fixpoint_cfg is not None else FixpointConfig()
    mask = fixpoint_refine(vol, fine_mask, fine_backends, fixpoint_cfg, cfg, bounds=roi)
    return SegmentationResult(mask=mask, roi=roi, fine_mask=fine_mask)


def segment(
    vol: Volume3,
    coarse_backend: Backend,
    fine_backends: Sequence[Backend],
    cfg: Optional[SegConfig] = None,
    fixpoint_cfg: Optional[FixpointConfig] = None,
) -> Mask3:
    """Full pipeline; returns a mask shaped and spaced like vol."""
    return run_segmentation(vol, coarse_backend, fine_backends, cfg, fixpoint_cfg).mask
