"""
Inference backends: the model behind each pipeline stage.
"""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from .errors import ShapeMismatch
from .models import Tensor5
from .unet import ModelWeights, load_weights, unet_forward

DEFAULT_ANALYTIC_WEIGHTS = (1.0, 1.0, 0.75)


class Backend(ABC):
    """Base class for all inference backends."""

    def __init__(self):
        self._name = self.__class__.__name__

    @property
    def name(self) -> str:
        """Backend name."""
        return self._name

    @property
    def in_channels(self) -> int:
        """Number of input channels expected."""
        return 2

    @abstractmethod
    def infer(self, patch: Tensor5) -> Tensor5:
        """
        Map a (C, dx, dy, dz) patch to (1, dx, dy, dz) logits.

        Must be deterministic and preserve the spatial shape.
        """
        pass

    def check_patch(self, patch: Tensor5) -> np.ndarray:
        """Validate the patch layout before inference."""
        patch = np.asarray(patch)
        if patch.ndim != 4:
            raise ShapeMismatch(f"patch must be (channels, dx, dy, dz), got {patch.shape}")
        if patch.shape[0] != self.in_channels:
            raise ShapeMismatch(
                f"{self.name} expects {self.in_channels} channels, got {patch.shape[0]}"
            )
        return patch


class AnalyticBackend(Backend):
    """
    Voxelwise linear model: logit = sum_k w_k * ch_k - t.

    Being strictly voxelwise, it commutes with every axis permutation. With
    the default (1, 1, 0.75) and the default windows the decision boundary
    sits at about -56 HU.
    """

    def __init__(
        self,
        w0: float = DEFAULT_ANALYTIC_WEIGHTS[0],
        w1: float = DEFAULT_ANALYTIC_WEIGHTS[1],
        t: float = DEFAULT_ANALYTIC_WEIGHTS[2],
    ):
        super().__init__()
        self.channel_weights = (float(w0), float(w1))
        self.offset = float(t)

    def infer(self, patch: Tensor5) -> Tensor5:
        patch = self.check_patch(patch)
        logits = np.full(patch.shape[1:], -self.offset, dtype=np.float64)
        for weight, channel in zip(self.channel_weights, patch):
            logits += weight * channel.astype(np.float64)
        return logits.astype(np.float32)[None]


class UNetBackend(Backend):
    """Classic U-Net evaluated on the CPU."""

    def __init__(self, weights: ModelWeights, source: str = ""):
        super().__init__()
        self.weights = weights
        self.source = source
        if source:
            self._name = f"UNetBackend({Path(source).name})"

    @property
    def in_channels(self) -> int:
        return self.weights.in_channels

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "UNetBackend":
        return cls(load_weights(path), source=str(path))

    def infer(self, patch: Tensor5) -> Tensor5:
        return unet_forward(self.weights, self.check_patch(patch))


def load_backends(paths: Sequence[Union[str, Path]]) -> List[Backend]:
    """Load one UNetBackend per weight file, in order."""
    return [UNetBackend.from_file(p) for p in paths]
