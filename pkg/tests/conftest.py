"""
Pytest fixtures for tubeseg tests.
"""

import pytest
import numpy as np

import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from tubeseg.backends import AnalyticBackend, UNetBackend
from tubeseg.fixpoint import FixpointConfig
from tubeseg.inference import SegConfig
from tubeseg.models import Mask3, Volume3
from tubeseg.phantom import PhantomSpec, generate_phantom
from tubeseg.unet import init_weights_random


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def trunk_phantom():
    """A 48^3 noisy phantom with only the trunk tube."""
    return generate_phantom(PhantomSpec(shape=(48, 48, 48), branch_count=0, seed=3))


@pytest.fixture
def branched_phantom():
    """A 48^3 noise-free phantom with two branches."""
    return generate_phantom(PhantomSpec(shape=(48, 48, 48), branch_count=2, noise_std=0, seed=5))


@pytest.fixture
def analytic_backend():
    """Voxelwise analytic backend with default weights."""
    return AnalyticBackend()


@pytest.fixture
def small_seg_config():
    """Stage configuration sized for fast tests."""
    return SegConfig(coarse_shape=(24, 24, 24), fine_patch=(16, 16, 16))


@pytest.fixture
def fixpoint_config():
    """Default fixpoint refinement settings."""
    return FixpointConfig()


@pytest.fixture
def tiny_weights():
    """Two-level U-Net with widths (4, 8)."""
    return init_weights_random(levels=2, base_width=4, seed=0)


@pytest.fixture
def tiny_unet(tiny_weights):
    """UNetBackend wrapping tiny_weights."""
    return UNetBackend(tiny_weights)


@pytest.fixture
def cube_mask():
    """A 4^3 foreground cube inside a 12^3 grid."""
    data = np.zeros((12, 12, 12), dtype=np.uint8)
    data[4:8, 4:8, 4:8] = 1
    return Mask3(data, (1.0, 1.0, 1.0))


@pytest.fixture
def ramp_volume():
    """A 10x8x6 volume whose value is x + 10y + 100z."""
    x, y, z = np.meshgrid(np.arange(10), np.arange(8), np.arange(6), indexing="ij")
    return Volume3((x + 10 * y + 100 * z).astype(np.float32), (1.0, 2.0, 3.0))
