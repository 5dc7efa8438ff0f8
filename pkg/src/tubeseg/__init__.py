"""
tubeseg - Coarse-to-fine 3D tubular structure segmentation

Locates a region of interest on a downsampled CT volume, segments it with
multi-view, multi-window sliding-window inference fused across models, and
cleans the result with fixpoint refinement.
"""

__version__ = "0.1.0"
__author__ = "tubeseg developers"

from .models import BBox3, Mask3, MultiChannelVolume, ViewAxis, Volume3, WindowSpec
from .backends import AnalyticBackend, Backend, UNetBackend
from .inference import SegConfig, fuse_models, multiview_infer, sliding_window_infer
from .fixpoint import FixpointConfig, fixpoint_refine, max_component
from .pipeline import coarse_locate, run_segmentation, segment
from .metrics import EvalReport, dice, evaluate_set, hausdorff
from .phantom import BlobSpec, PhantomSpec, generate_phantom
from .config import PipelineConfig, load_config

__all__ = [
    # Models
    "BBox3",
    "Mask3",
    "MultiChannelVolume",
    "ViewAxis",
    "Volume3",
    "WindowSpec",
    # Backends
    "AnalyticBackend",
    "Backend",
    "UNetBackend",
    # Pipeline
    "SegConfig",
    "FixpointConfig",
    "coarse_locate",
    "fixpoint_refine",
    "fuse_models",
    "max_component",
    "multiview_infer",
    "run_segmentation",
    "segment",
    "sliding_window_infer",
    # Evaluation
    "EvalReport",
    "dice",
    "evaluate_set",
    "hausdorff",
    # Phantoms
    "BlobSpec",
    "PhantomSpec",
    "generate_phantom",
    # Configuration
    "PipelineConfig",
    "load_config",
]
