"""
Pipeline configuration: key/value config files and environment overrides.

Config file format (UTF-8)::

    # comment
    windows = -900:0, 0:300
    coarse_shape = 192,192,192
    model = weights/fold1.unw      # repeatable, relative to this file
    fixpoint_iterations = 2

Every key is optional; unknown keys and malformed values are rejected.
"""

import logging
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

from dotenv import find_dotenv, load_dotenv

from .backends import DEFAULT_ANALYTIC_WEIGHTS
from .errors import InvalidConfig, IoFailure
from .fixpoint import FixpointConfig
from .inference import SegConfig
from .models import ViewAxis, WindowSpec
from .windowing import parse_window

logger = logging.getLogger(__name__)

ENV_THREADS = "TUBESEG_THREADS"
ENV_CONFIG = "TUBESEG_CONFIG"

# "#" opens a comment at line start or after whitespace
_COMMENT = re.compile(r"(^|\s)#.*$")

PathLike = Union[str, Path]


def _load_dotenv() -> None:
    load_dotenv(find_dotenv(usecwd=True))


@dataclass
class PipelineConfig:
    """Everything a segmentation run needs besides the input volume."""

    seg: SegConfig = field(default_factory=SegConfig)
    fixpoint: FixpointConfig = field(default_factory=FixpointConfig)
    analytic_weights: Tuple[float, float, float] = DEFAULT_ANALYTIC_WEIGHTS
    coarse_model: Optional[str] = None

    @property
    def windows(self) -> Tuple[WindowSpec, ...]:
        return self.seg.windows

    @property
    def model_paths(self) -> List[str]:
        return self.seg.model_paths

    @property
    def coarse_model_path(self) -> Optional[str]:
        """Coarse-stage weights; the first fine model when not set."""
        if self.coarse_model:
            return self.coarse_model
        return self.seg.model_paths[0] if self.seg.model_paths else None

    @classmethod
    def from_env(cls) -> "PipelineConfig":
        """
        Load the file named by TUBESEG_CONFIG, or defaults when unset.

        A .env file in the working directory is read first.
        """
        _load_dotenv()
        path = os.environ.get(ENV_CONFIG, "")
        if not path:
            return cls()
        return load_config(path)


def default_threads(fallback: int = 1) -> int:
    """Worker count from TUBESEG_THREADS (0 = one per CPU), else fallback."""
    _load_dotenv()
    raw = os.environ.get(ENV_THREADS, "").strip()
    if not raw:
        return fallback
    try:
        threads = int(raw)
    except ValueError:
        raise InvalidConfig(f"{ENV_THREADS} must be an integer, got {raw!r}") from None
    if threads < 0:
        raise InvalidConfig(f"{ENV_THREADS} must be >= 0, got {threads}")
    return threads


def _split(value: str) -> List[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


def _ints(count: int) -> Callable[[str], Tuple[int, ...]]:
    def parse(value: str) -> Tuple[int, ...]:
        parts = [int(p) for p in _split(value)]
        if len(parts) != count:
            raise ValueError(f"expected {count} integers")
        return tuple(parts)

    return parse


def _floats(count: int) -> Callable[[str], Tuple[float, ...]]:
    def parse(value: str) -> Tuple[float, ...]:
        parts = [float(p) for p in _split(value)]
        if len(parts) != count:
            raise ValueError(f"expected {count} numbers")
        return tuple(parts)

    return parse


def _windows(value: str) -> Tuple[WindowSpec, ...]:
    return tuple(parse_window(p) for p in _split(value))


def _views(value: str) -> Tuple[ViewAxis, ...]:
    return tuple(ViewAxis.parse(p) for p in _split(value))


# key -> (parser, destination)
_KEYS: Dict[str, Tuple[Callable[[str], object], str]] = {
    "windows": (_windows, "seg.windows"),
    "coarse_shape": (_ints(3), "seg.coarse_shape"),
    "fine_patch": (_ints(3), "seg.fine_patch"),
    "roi_margin_voxels": (int, "seg.roi_margin_voxels"),
    "threshold": (float, "seg.threshold"),
    "views": (_views, "seg.views"),
    "threads": (int, "seg.threads"),
    "fixpoint_iterations": (int, "fixpoint.iterations"),
    "fixpoint_expand_voxels": (int, "fixpoint.expand_voxels"),
    "fixpoint_connectivity": (int, "fixpoint.connectivity"),
    "analytic_weights": (_floats(3), "analytic_weights"),
    "coarse_model": (str, "coarse_model"),
}


def parse_config(text: str, base_dir: Optional[PathLike] = None) -> PipelineConfig:
    """
    Parse config file text.

    Args:
        text: File contents
        base_dir: Directory relative model paths resolve against

    Raises:
        InvalidConfig: unknown key, repeated key, malformed line or value
    """
    base = Path(base_dir) if base_dir is not None else None

    def resolve(value: str) -> str:
        path = Path(value)
        if base is not None and not path.is_absolute():
            path = base / path
        return str(path)

    values: Dict[str, object] = {}
    models: List[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = _COMMENT.sub("", line).strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise InvalidConfig(f"line {lineno}: expected 'key = value', got {line!r}")
        if key == "model":
            models.append(resolve(value))
            continue
        if key not in _KEYS:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise InvalidConfig(f"line {lineno}: key {key!r} given twice")
        parser, _ = _KEYS[key]
        try:
            parsed = parser(value)
        except ValueError as exc:
            raise InvalidConfig(f"line {lineno}: bad value for {key}: {exc}") from exc
        values[key] = resolve(value) if key == "coarse_model" else parsed

    seg_args: Dict[str, object] = {"model_paths": models}
    fixpoint_args: Dict[str, object] = {}
    top_args: Dict[str, object] = {}
    for key, parsed in values.items():
        dest = _KEYS[key][1]
        if dest.startswith("seg."):
            seg_args[dest[4:]] = parsed
        elif dest.startswith("fixpoint."):
            fixpoint_args[dest[9:]] = parsed
        else:
            top_args[dest] = parsed

    cfg = PipelineConfig(
        seg=SegConfig(**seg_args),  # type: ignore[arg-type]
        fixpoint=FixpointConfig(**fixpoint_args),  # type: ignore[arg-type]
        **top_args,  # type: ignore[arg-type]
    )
    logger.debug("parsed config with %d keys and %d models", len(values), len(models))
    return cfg


def load_config(path: PathLike) -> PipelineConfig:
    """Read and parse a config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise InvalidConfig(f"config file {path} does not exist") from exc
    except UnicodeDecodeError as exc:
        raise InvalidConfig(f"{path}: not UTF-8 text") from exc
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def with_threads(cfg: PipelineConfig, threads: int) -> PipelineConfig:
    """Copy of cfg with a different worker count."""
    return replace(cfg, seg=replace(cfg.seg, threads=threads))
