"""
Fine-stage inference: multi-view patch inference, zero-overlap sliding
windows and multi-model fusion.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .backends import Backend
from .errors import InvalidConfig, ShapeMismatch
from .models import (
    ALL_VIEWS,
    Mask3,
    MultiChannelVolume,
    Shape3,
    Spacing3,
    Tensor5,
    ViewAxis,
    Volume3,
    WindowSpec,
)
from .volume import inverse_transpose_view, transpose_view
from .windowing import DEFAULT_WINDOWS, make_channels

logger = logging.getLogger(__name__)

# HU used to pad ROIs up to a whole number of patches
PAD_HU = -1024.0

FUSION_RULES = ("additive_union",)


@dataclass
class SegConfig:
    """Configuration for the coarse and fine stages."""

    coarse_shape: Shape3 = (192, 192, 192)
    fine_patch: Shape3 = (192, 192, 192)
    roi_margin_voxels: int = 2
    threshold: float = 0.5
    views: Tuple[ViewAxis, ...] = ALL_VIEWS
    model_paths: List[str] = field(default_factory=list)
    fusion: str = "additive_union"
    windows: Tuple[WindowSpec, ...] = DEFAULT_WINDOWS
    threads: int = 1  # 0 = one per CPU

    def __post_init__(self):
        self.coarse_shape = tuple(int(n) for n in self.coarse_shape)  # type: ignore[assignment]
        self.fine_patch = tuple(int(n) for n in self.fine_patch)  # type: ignore[assignment]
        self.views = tuple(self.views)
        self.windows = tuple(self.windows)
        for name in ("coarse_shape", "fine_patch"):
            value = getattr(self, name)
            if len(value) != 3 or any(n < 1 for n in value):
                raise InvalidConfig(f"{name} must be 3 positive integers, got {value}")
        if self.roi_margin_voxels < 0:
            raise InvalidConfig("roi_margin_voxels must be >= 0")
        if not 0.0 < self.threshold < 1.0:
            raise InvalidConfig(f"threshold must lie in (0, 1), got {self.threshold}")
        if not self.views:
            raise InvalidConfig("at least one view is required")
        if not self.windows:
            raise InvalidConfig("at least one window is required")
        if self.fusion not in FUSION_RULES:
            raise InvalidConfig(f"unknown fusion rule {self.fusion!r}")
        if self.threads < 0:
            raise InvalidConfig("threads must be >= 0")

    @property
    def worker_count(self) -> int:
        return self.threads or (os.cpu_count() or 1)


def multiview_infer(
    patch: Union[MultiChannelVolume, Tensor5],
    backend: Backend,
    views: Sequence[ViewAxis] = ALL_VIEWS,
) -> Tensor5:
    """
    Infer a patch in several viewing planes and fuse before activation.

    Each view's logits are mapped back to the original axis order and
    averaged; the sigmoid is applied once to the average.

    Returns:
        (1, dx, dy, dz) float32 probabilities
    """
    tensor = patch.as_tensor() if isinstance(patch, MultiChannelVolume) else np.asarray(patch)
    if not views:
        raise ValueError("at least one view is required")
    total: Optional[np.ndarray] = None
    for view in views:
        logits = backend.infer(transpose_view(tensor, view))
        logits = inverse_transpose_view(logits, view).astype(np.float64)
        total = logits if total is None else total + logits
    mean = total / len(views)  # type: ignore[operator]
    return expit(mean).astype(np.float32)


def padded_shape(shape: Shape3, patch: Shape3) -> Shape3:
    """Smallest whole multiple of patch covering shape."""
    return tuple(-(-n // p) * p for n, p in zip(shape, patch))  # type: ignore[return-value]


def plan_tiles(shape: Shape3, patch: Shape3) -> List[Tuple[slice, slice, slice]]:
    """
    Zero-overlap tiling with stride equal to the patch size.

    Tiles cover padded_shape(shape, patch); each padded voxel belongs to
    exactly one tile.
    """
    counts = [-(-n // p) for n, p in zip(shape, patch)]
    return [
        tuple(slice(i * p, (i + 1) * p) for i, p in zip(index, patch))  # type: ignore[misc]
        for index in product(*(range(c) for c in counts))
    ]


def sliding_window_infer(
    roi_vol: Volume3,
    backends: Sequence[Backend],
    cfg: SegConfig,
) -> List[np.ndarray]:
    """
    Run every backend over the ROI with non-overlapping windows.

    The ROI is padded with background HU to a multiple of cfg.fine_patch,
    each tile goes through multiview_infer, and the padding is cropped off.
    Tiles write disjoint slices, so the worker count cannot change the
    result.

    Returns:
        One float32 probability grid per backend, shaped like roi_vol
    """
    if not backends:
        raise ValueError("at least one backend is required")
    shape = roi_vol.shape
    full = padded_shape(shape, cfg.fine_patch)
    padded = np.full(full, PAD_HU, dtype=np.float32)
    padded[: shape[0], : shape[1], : shape[2]] = roi_vol.data

    outputs = [np.empty(full, dtype=np.float32) for _ in backends]
    tiles = plan_tiles(shape, cfg.fine_patch)
    logger.info(
        "sliding window: roi=%s padded=%s tiles=%d models=%d views=%d",
        shape, full, len(tiles), len(backends), len(cfg.views),
    )

    def run(tile: Tuple[slice, slice, slice]) -> None:
        channels = make_channels(Volume3(padded[tile], roi_vol.spacing), cfg.windows)
        tensor = channels.as_tensor()
        for out, backend in zip(outputs, backends):
            out[tile] = multiview_infer(tensor, backend, cfg.views)[0]

    workers = min(cfg.worker_count, len(tiles))
    if workers <= 1:
        for tile in tiles:
            run(tile)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, tiles))

    crop = tuple(slice(0, n) for n in shape)
    return [np.ascontiguousarray(out[crop]) for out in outputs]


def fuse_models(
    prob_volumes: Sequence[np.ndarray],
    threshold: float = 0.5,
    spacing: Spacing3 = (1.0, 1.0, 1.0),
) -> Mask3:
    """
    Additive fusion of several models.

    Each probability grid is binarized (p > threshold); the binaries are
    added and any voxel with a positive sum is foreground, i.e. the union.
    """
    if not prob_volumes:
        raise ValueError("at least one probability volume is required")
    shape = np.shape(prob_volumes[0])
    votes = np.zeros(shape, dtype=np.int32)
    for probs in prob_volumes:
        if np.shape(probs) != shape:
            raise ShapeMismatch(f"probability grids differ in shape: {np.shape(probs)} vs {shape}")
        votes += np.asarray(probs) > threshold
    return Mask3(votes > 0, spacing)
