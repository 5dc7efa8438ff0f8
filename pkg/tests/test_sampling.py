"""
Sanity tests for patch sampling.
"""

import numpy as np
import pytest

from tubeseg.errors import ShapeMismatch
from tubeseg.models import BBox3, Mask3
from tubeseg.sampling import classify_patch, sample_patches


class TestClassifyPatch:
    """Sanity tests for classify_patch."""

    @pytest.mark.sanity
    def test_center_on_vessel(self, cube_mask):
        """Test a patch centered on foreground is positive."""
        assert classify_patch(BBox3((2, 2, 2), (9, 9, 9)), cube_mask) is True

    @pytest.mark.sanity
    def test_vessel_only_at_edge(self, cube_mask):
        """Test foreground away from the center does not count."""
        assert classify_patch(BBox3((7, 7, 7), (11, 11, 11)), cube_mask) is False

    @pytest.mark.sanity
    def test_empty_mask(self):
        """Test an empty mask yields negative patches."""
        assert classify_patch(BBox3((0, 0, 0), (3, 3, 3)), Mask3.zeros((4, 4, 4))) is False

    @pytest.mark.sanity
    def test_outside_grid(self, cube_mask):
        """Test patches must lie inside the mask."""
        with pytest.raises(ShapeMismatch):
            classify_patch(BBox3((8, 8, 8), (12, 12, 12)), cube_mask)


class TestSamplePatches:
    """Sanity tests for sample_patches."""

    @pytest.mark.sanity
    def test_count_and_shape(self, trunk_phantom):
        """Test the requested number of in-grid patches."""
        _, gt = trunk_phantom
        samples = sample_patches(gt, (16, 16, 16), count=4)
        assert len(samples) == 4
        for box, positive in samples:
            assert box.shape == (16, 16, 16)
            assert box.fits(gt.shape)
            assert positive == classify_patch(box, gt)

    @pytest.mark.sanity
    def test_positive_share(self, trunk_phantom):
        """Test foreground-centered draws are positive."""
        _, gt = trunk_phantom
        samples = sample_patches(gt, (8, 8, 8), count=10, positive_fraction=1.0, seed=4)
        assert all(positive for _, positive in samples)

    @pytest.mark.sanity
    def test_deterministic(self, trunk_phantom):
        """Test the same seed gives the same patches."""
        _, gt = trunk_phantom
        a = sample_patches(gt, (16, 16, 16), count=6, seed=9)
        b = sample_patches(gt, (16, 16, 16), count=6, seed=9)
        assert a == b

    @pytest.mark.sanity
    def test_patch_clamped_to_grid(self):
        """Test patches larger than the grid shrink to it."""
        mask = Mask3(np.ones((4, 5, 6)))
        (box, positive), = sample_patches(mask, (10, 10, 10), count=1)
        assert box.to_list() == [[0, 0, 0], [3, 4, 5]]
        assert positive

    @pytest.mark.sanity
    def test_invalid_arguments(self, cube_mask):
        """Test bad counts and fractions are rejected."""
        with pytest.raises(ValueError):
            sample_patches(cube_mask, (4, 4, 4), count=-1)
        with pytest.raises(ValueError):
            sample_patches(cube_mask, (4, 4, 4), positive_fraction=1.5)
