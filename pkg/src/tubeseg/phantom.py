"""
Synthetic CT phantoms with exact ground truth.

A curved trunk tube runs along z; straight branch tubes leave it from
points on its centerline, so trunk and branches always touch. A tube is the
set of voxel centers within radius of a polyline, which is also the ground
truth, so the label has no discretization ambiguity. Trunk and branch HU
defaults sit in the [0, 300] and [-900, 0] windows respectively.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import DegenerateSpec
from .models import Mask3, Shape3, Spacing3, Volume3

logger = logging.getLogger(__name__)

MIN_SIZE = 16
TRUNK_SEGMENTS = 16


@dataclass(frozen=True)
class BlobSpec:
    """A sphere added to the volume but not to the label."""

    center: Tuple[int, int, int]
    radius: float = 3.0
    hu: float = 150.0


@dataclass
class PhantomSpec:
    """Parameters of a vessel phantom."""

    shape: Shape3 = (64, 64, 64)
    spacing: Spacing3 = (1.0, 1.0, 1.0)
    seed: int = 0
    trunk_radius_voxels: float = 4.0
    branch_count: int = 2
    trunk_hu: float = 150.0
    branch_hu: float = -450.0
    background_hu: float = -1024.0
    noise_std: float = 20.0
    false_positive_blob: Optional[BlobSpec] = None

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)  # type: ignore[assignment]
        self.spacing = tuple(float(s) for s in self.spacing)  # type: ignore[assignment]
        if len(self.shape) != 3 or any(n < MIN_SIZE for n in self.shape):
            raise DegenerateSpec(f"phantom shape must be at least {MIN_SIZE}^3, got {self.shape}")
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise DegenerateSpec(f"spacing must be positive, got {self.spacing}")
        if self.trunk_radius_voxels < 1:
            raise DegenerateSpec("trunk radius must be at least 1 voxel")
        if self.branch_count < 0:
            raise DegenerateSpec("branch count must be >= 0")
        if self.noise_std < 0:
            raise DegenerateSpec("noise_std must be >= 0")
        if self.false_positive_blob is not None and self.false_positive_blob.radius < 1:
            raise DegenerateSpec("blob radius must be at least 1 voxel")

    @property
    def branch_radius_voxels(self) -> float:
        return max(1.0, self.trunk_radius_voxels / 2)


def trunk_centerline(spec: PhantomSpec) -> np.ndarray:
    """
    Vertices of the trunk polyline, shape (TRUNK_SEGMENTS + 1, 3).

    Raises:
        DegenerateSpec: the tube does not fit inside the grid
    """
    nx, ny, nz = spec.shape
    r = spec.trunk_radius_voxels
    amplitude = nx / 16.0
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    z0 = math.ceil(r) + 1.0
    z1 = nz - 2.0 - math.ceil(r)
    if z1 <= z0:
        raise DegenerateSpec(f"trunk radius {r} leaves no room along z in {spec.shape}")
    if cx - amplitude - r < 0 or cy - amplitude / 2 - r < 0:
        raise DegenerateSpec(f"trunk radius {r} does not fit in {spec.shape}")

    t = np.linspace(0.0, 1.0, TRUNK_SEGMENTS + 1)
    return np.stack(
        [
            cx + amplitude * np.sin(2 * np.pi * t),
            cy + amplitude / 2 * np.sin(np.pi * t),
            z0 + (z1 - z0) * t,
        ],
        axis=1,
    )


def segment_distance_sq(points: np.ndarray, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    """Squared distance from each point (..., 3) to the segment p0-p1."""
    d = p1 - p0
    length_sq = float(d @ d)
    rel = points - p0
    if length_sq == 0.0:
        t = np.zeros(points.shape[:-1])
    else:
        t = np.clip(rel @ d / length_sq, 0.0, 1.0)
    closest = rel - t[..., None] * d
    return (closest ** 2).sum(axis=-1)


def rasterize_polyline(shape: Shape3, vertices: np.ndarray, radius: float) -> np.ndarray:
    """Boolean grid of voxel centers within radius of the polyline."""
    out = np.zeros(shape, dtype=bool)
    for p0, p1 in zip(vertices[:-1], vertices[1:]):
        lo = np.maximum(np.floor(np.minimum(p0, p1) - radius), 0).astype(int)
        hi = np.minimum(np.ceil(np.maximum(p0, p1) + radius), np.array(shape) - 1).astype(int)
        if np.any(hi < lo):
            continue
        axes = [np.arange(a, b + 1, dtype=np.float64) for a, b in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        inside = segment_distance_sq(grid, p0, p1) <= radius * radius
        out[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1] |= inside
    return out


def branch_segments(spec: PhantomSpec, rng: np.random.Generator) -> List[np.ndarray]:
    """Start/end vertices of each branch, starting on the trunk centerline."""
    trunk = trunk_centerline(spec)
    extent = np.array(spec.shape, dtype=np.float64) - 1
    margin = spec.branch_radius_voxels
    length = min(spec.shape[0], spec.shape[1]) / 4.0
    branches = []
    for i in range(spec.branch_count):
        position = (i + 1) / (spec.branch_count + 1) * TRUNK_SEGMENTS
        k = min(int(position), TRUNK_SEGMENTS - 1)
        start = trunk[k] + (position - k) * (trunk[k + 1] - trunk[k])
        angle = rng.uniform(0.0, 2 * np.pi)
        direction = np.array([np.cos(angle), np.sin(angle), rng.uniform(-0.3, 0.3)])
        direction /= np.linalg.norm(direction)
        end = np.clip(start + length * direction, margin, extent - margin)
        branches.append(np.stack([start, end]))
    return branches


def generate_phantom(spec: PhantomSpec) -> Tuple[Volume3, Mask3]:
    """
    Rasterize a vessel phantom.

    Returns:
        (volume in HU, ground-truth mask); identical for identical specs
    """
    rng = np.random.Generator(np.random.Philox(spec.seed))

    trunk = rasterize_polyline(spec.shape, trunk_centerline(spec), spec.trunk_radius_voxels)
    branches = np.zeros(spec.shape, dtype=bool)
    for segment in branch_segments(spec, rng):
        branches |= rasterize_polyline(spec.shape, segment, spec.branch_radius_voxels)
    vessel = trunk | branches

    data = np.full(spec.shape, spec.background_hu, dtype=np.float64)
    data[branches] = spec.branch_hu
    data[trunk] = spec.trunk_hu

    blob = spec.false_positive_blob
    if blob is not None:
        sphere = rasterize_polyline(
            spec.shape, np.array([blob.center, blob.center], dtype=np.float64), blob.radius
        )
        data[sphere & ~vessel] = blob.hu

    if spec.noise_std > 0:
        data += rng.standard_normal(spec.shape) * spec.noise_std

    fraction = vessel.mean()
    logger.debug("phantom %s: vessel fraction %.4f", spec.shape, fraction)
    return Volume3(data.astype(np.float32), spec.spacing), Mask3(vessel, spec.spacing)
