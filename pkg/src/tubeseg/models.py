"""
Data models for the tubeseg segmentation toolkit.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Tuple

import numpy as np

from .errors import EmptyMask, InvalidWindow, ShapeMismatch

Shape3 = Tuple[int, int, int]
Spacing3 = Tuple[float, float, float]

# (C, dx, dy, dz) float32 array; batch fixed at 1
Tensor5 = np.ndarray


def _as_spacing(spacing) -> Spacing3:
    values = tuple(float(s) for s in spacing)
    if len(values) != 3 or not all(np.isfinite(s) and s > 0 for s in values):
        raise ValueError(f"spacing must be 3 positive reals, got {spacing!r}")
    return values  # type: ignore[return-value]


class ViewAxis(Enum):
    """Viewing plane, defined as a fixed permutation of (x, y, z)."""

    AXIAL = (0, 1, 2)
    CORONAL = (0, 2, 1)
    SAGITTAL = (2, 1, 0)
    # the horizontal plane is the axial one
    HORIZONTAL = (0, 1, 2)

    @property
    def permutation(self) -> Tuple[int, int, int]:
        """Axis order that brings this view's slicing axis last."""
        return self.value

    @property
    def inverse(self) -> Tuple[int, int, int]:
        """Permutation undoing this view."""
        return tuple(int(i) for i in np.argsort(self.value))  # type: ignore[return-value]

    @classmethod
    def parse(cls, name: str) -> "ViewAxis":
        """View from a case-insensitive name such as "axial"."""
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown view {name!r}") from None


ALL_VIEWS: Tuple[ViewAxis, ...] = (ViewAxis.AXIAL, ViewAxis.CORONAL, ViewAxis.SAGITTAL)


@dataclass
class Volume3:
    """A 3D scalar grid in Hounsfield units, indexed (x, y, z)."""

    data: np.ndarray
    spacing: Spacing3 = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.size == 0:
            raise ShapeMismatch(f"volume must be a non-empty 3D grid, got {self.data.shape}")
        self.spacing = _as_spacing(self.spacing)

    @property
    def shape(self) -> Shape3:
        return tuple(int(n) for n in self.data.shape)  # type: ignore[return-value]

    def crop(self, box: "BBox3") -> "Volume3":
        """Sub-volume inside an inclusive box."""
        return Volume3(self.data[box.slices].copy(), self.spacing)


@dataclass
class Mask3:
    """A 3D binary grid aligned to a Volume3."""

    data: np.ndarray
    spacing: Spacing3 = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.size == 0:
            raise ShapeMismatch(f"mask must be a non-empty 3D grid, got {data.shape}")
        self.data = (data != 0).astype(np.uint8)
        self.spacing = _as_spacing(self.spacing)

    @property
    def shape(self) -> Shape3:
        return tuple(int(n) for n in self.data.shape)  # type: ignore[return-value]

    @property
    def foreground_count(self) -> int:
        """Number of voxels equal to 1."""
        return int(np.count_nonzero(self.data))

    @property
    def is_empty(self) -> bool:
        """True when no voxel is foreground."""
        return not self.data.any()

    def points_mm(self) -> np.ndarray:
        """Foreground voxel centers in millimetres, shape (n, 3)."""
        return np.argwhere(self.data).astype(np.float64) * np.asarray(self.spacing)

    @classmethod
    def zeros(cls, shape: Shape3, spacing: Spacing3 = (1.0, 1.0, 1.0)) -> "Mask3":
        return cls(np.zeros(shape, dtype=np.uint8), spacing)


@dataclass(frozen=True)
class BBox3:
    """Inclusive voxel-index box plus the spacing of the grid it lives in."""

    lo: Tuple[int, int, int]
    hi: Tuple[int, int, int]
    frame_spacing: Spacing3 = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.lo) != 3 or len(self.hi) != 3:
            raise ValueError("box corners must have 3 components")
        if any(lo > hi for lo, hi in zip(self.lo, self.hi)):
            raise ValueError(f"box lo {self.lo} exceeds hi {self.hi}")

    @property
    def shape(self) -> Shape3:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))  # type: ignore[return-value]

    @property
    def slices(self) -> Tuple[slice, slice, slice]:
        return tuple(slice(a, b + 1) for a, b in zip(self.lo, self.hi))  # type: ignore[return-value]

    @property
    def center(self) -> Tuple[int, int, int]:
        return tuple((a + b) // 2 for a, b in zip(self.lo, self.hi))  # type: ignore[return-value]

    def contains(self, other: "BBox3") -> bool:
        return all(a <= b for a, b in zip(self.lo, other.lo)) and all(
            a >= b for a, b in zip(self.hi, other.hi)
        )

    def fits(self, shape: Shape3) -> bool:
        return all(a >= 0 for a in self.lo) and all(b < n for b, n in zip(self.hi, shape))

    def expand(self, n: int, shape: Shape3) -> "BBox3":
        """Grow every face outward by n voxels, clamped to the grid."""
        lo = tuple(max(0, a - n) for a in self.lo)
        hi = tuple(min(s - 1, b + n) for b, s in zip(self.hi, shape))
        return BBox3(lo, hi, self.frame_spacing)  # type: ignore[arg-type]

    def intersect(self, other: "BBox3") -> "BBox3":
        """Overlap of two boxes in the same frame."""
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        return BBox3(lo, hi, self.frame_spacing)  # type: ignore[arg-type]

    def to_list(self) -> List[List[int]]:
        return [list(self.lo), list(self.hi)]


def full_box(shape: Shape3, spacing: Spacing3 = (1.0, 1.0, 1.0)) -> BBox3:
    """Box covering the whole grid."""
    return BBox3((0, 0, 0), tuple(n - 1 for n in shape), spacing)  # type: ignore[arg-type]


def require_foreground(mask: Mask3, what: str = "mask") -> None:
    """Raise EmptyMask naming `what` if the mask has no foreground."""
    if mask.is_empty:
        raise EmptyMask(f"{what} has no foreground voxels")


@dataclass(frozen=True)
class WindowSpec:
    """An HU interval mapped linearly onto [0, 1]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidWindow(f"window lo {self.lo} must be below hi {self.hi}")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass
class MultiChannelVolume:
    """Windowed channels derived from one Volume3."""

    channels: List[Volume3]
    window_specs: List[WindowSpec] = field(default_factory=list)

    def __post_init__(self):
        if not self.channels:
            raise ValueError("at least one channel is required")
        if len(self.channels) != len(self.window_specs):
            raise ShapeMismatch("channel count must equal window count")
        first = self.channels[0]
        for channel in self.channels[1:]:
            if channel.shape != first.shape or channel.spacing != first.spacing:
                raise ShapeMismatch("channels must share shape and spacing")

    @property
    def shape(self) -> Shape3:
        return self.channels[0].shape

    @property
    def spacing(self) -> Spacing3:
        return self.channels[0].spacing

    def as_tensor(self) -> Tensor5:
        """Stack channels into a (C, dx, dy, dz) float32 tensor."""
        return np.stack([c.data for c in self.channels]).astype(np.float32, copy=False)
