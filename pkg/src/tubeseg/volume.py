"""
Geometric operations on grids: resampling, bounding boxes, view transposition.

Both interpolators sample with aligned corners: output index j on an axis of
m voxels maps to source position j * (n - 1) / (m - 1), so the first and
last voxel centers coincide. Both go through scipy.ndimage.affine_transform
with a diagonal matrix; positions outside the grid clamp to the edge.
"""

import logging
import warnings
from typing import Sequence, Tuple, TypeVar

import numpy as np
from scipy import ndimage

from .errors import DegenerateAxis, ShapeMismatch
from .models import (
    BBox3,
    Mask3,
    Shape3,
    Spacing3,
    ViewAxis,
    Volume3,
    require_foreground,
)

logger = logging.getLogger(__name__)

G = TypeVar("G", Volume3, Mask3, np.ndarray)


def _target_shape(target_shape: Sequence[int]) -> Shape3:
    shape = tuple(int(n) for n in target_shape)
    if len(shape) != 3 or any(n < 1 for n in shape):
        raise ShapeMismatch(f"target shape must be 3 positive integers, got {target_shape!r}")
    return shape  # type: ignore[return-value]


def sample_positions(n_in: int, n_out: int) -> np.ndarray:
    """Source positions of each output voxel along one axis."""
    if n_out == 1:
        return np.array([(n_in - 1) / 2.0])
    return np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))


def resampled_spacing(spacing: Spacing3, shape_in: Shape3, shape_out: Shape3) -> Spacing3:
    """
    Spacing of a corner-aligned resample.

    A source axis of one voxel keeps its spacing; a target axis of one voxel
    spans the whole source extent.
    """
    out = []
    for s, n, m in zip(spacing, shape_in, shape_out):
        if n == 1:
            out.append(s)
        elif m == 1:
            out.append(s * n)
        else:
            out.append(s * (n - 1) / (m - 1))
    return tuple(out)  # type: ignore[return-value]


def _warn_degenerate(shape_in: Shape3, shape_out: Shape3) -> None:
    for axis, (n, m) in enumerate(zip(shape_in, shape_out)):
        if n == 1 and m > 1:
            warnings.warn(
                f"axis {axis} has a single voxel; replicating to {m}",
                DegenerateAxis,
                stacklevel=3,
            )


def _affine_along_axes(shape_in: Shape3, shape_out: Shape3) -> Tuple[np.ndarray, np.ndarray]:
    """Diagonal matrix and offset mapping output indices to source positions."""
    scale, offset = [], []
    for n, m in zip(shape_in, shape_out):
        pos = sample_positions(n, m)
        offset.append(float(pos[0]))
        scale.append(float(pos[1] - pos[0]) if m > 1 else 0.0)
    return np.array(scale), np.array(offset)


def _resample(data: np.ndarray, shape: Shape3, order: int) -> np.ndarray:
    if data.shape == shape:
        return data.copy()
    matrix, offset = _affine_along_axes(data.shape, shape)  # type: ignore[arg-type]
    return ndimage.affine_transform(
        data, matrix, offset=offset, output_shape=shape, order=order, mode="nearest"
    )


def resample_trilinear(vol: Volume3, target_shape: Sequence[int]) -> Volume3:
    """Trilinear resample to target_shape, interpolating in float64."""
    shape = _target_shape(target_shape)
    _warn_degenerate(vol.shape, shape)
    data = _resample(vol.data.astype(np.float64), shape, order=1)
    return Volume3(data.astype(np.float32), resampled_spacing(vol.spacing, vol.shape, shape))


def resample_nearest(mask: Mask3, target_shape: Sequence[int]) -> Mask3:
    """Nearest-neighbor resample; positions round half up."""
    shape = _target_shape(target_shape)
    _warn_degenerate(mask.shape, shape)
    data = _resample(mask.data, shape, order=0)
    return Mask3(data, resampled_spacing(mask.spacing, mask.shape, shape))


def bounding_box(mask: Mask3) -> BBox3:
    """
    Tightest inclusive box around the foreground.

    Raises:
        EmptyMask: no foreground voxel
    """
    require_foreground(mask)
    lo, hi = [], []
    for axis in range(3):
        others = tuple(a for a in range(3) if a != axis)
        hits = np.flatnonzero(mask.data.any(axis=others))
        lo.append(int(hits[0]))
        hi.append(int(hits[-1]))
    return BBox3(tuple(lo), tuple(hi), mask.spacing)  # type: ignore[arg-type]


def _permute(grid: G, perm: Tuple[int, int, int]) -> G:
    if isinstance(grid, (Volume3, Mask3)):
        data = np.ascontiguousarray(grid.data.transpose(perm))
        spacing = tuple(grid.spacing[p] for p in perm)
        return type(grid)(data, spacing)  # type: ignore[return-value]
    array = np.asarray(grid)
    if array.ndim == 3:
        return np.ascontiguousarray(array.transpose(perm))  # type: ignore[return-value]
    if array.ndim == 4:
        # channel axis stays first
        return np.ascontiguousarray(
            array.transpose((0,) + tuple(p + 1 for p in perm))
        )  # type: ignore[return-value]
    raise ShapeMismatch(f"cannot transpose a grid with {array.ndim} dimensions")


def transpose_view(grid: G, view: ViewAxis) -> G:
    """Permute spatial axes into the given viewing plane."""
    if view.permutation == (0, 1, 2):
        return grid
    return _permute(grid, view.permutation)


def inverse_transpose_view(grid: G, view: ViewAxis) -> G:
    """Undo transpose_view for the same view."""
    if view.permutation == (0, 1, 2):
        return grid
    return _permute(grid, view.inverse)

