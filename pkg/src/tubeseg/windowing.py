"""
Multi-window intensity scaling of CT volumes.

Each window maps its HU interval linearly onto [0, 1] without clipping, so
intensities outside the window land below 0 or above 1 and keep their
information. The defaults separate the branch range [-900, 0] from the
trunk range [0, 300].
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from .models import MultiChannelVolume, Volume3, WindowSpec

DEFAULT_WINDOWS: Tuple[WindowSpec, ...] = (
    WindowSpec(-900.0, 0.0),
    WindowSpec(0.0, 300.0),
)


def scale_intensity(data: np.ndarray, window: WindowSpec) -> np.ndarray:
    """Affine map (v - lo) / (hi - lo), computed in float64."""
    return (np.asarray(data, dtype=np.float64) - window.lo) / window.width


def make_channels(
    vol: Volume3,
    windows: Optional[Sequence[WindowSpec]] = None,
) -> MultiChannelVolume:
    """
    Build one channel per window, in window order.

    Args:
        vol: Source volume in HU
        windows: Window list (default: DEFAULT_WINDOWS)

    Returns:
        MultiChannelVolume with the same shape and spacing as vol
    """
    specs = list(DEFAULT_WINDOWS if windows is None else windows)
    if not specs:
        raise ValueError("at least one window is required")
    channels = [
        Volume3(scale_intensity(vol.data, spec).astype(np.float32), vol.spacing)
        for spec in specs
    ]
    return MultiChannelVolume(channels, specs)


def parse_window(text: str) -> WindowSpec:
    """Parse "lo:hi" into a WindowSpec."""
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"window {text!r} must be written lo:hi")
    return WindowSpec(float(lo), float(hi))
