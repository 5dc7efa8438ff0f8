"""
Classic 3D U-Net forward pass on numpy, with the UNW1 weight file format.

Architecture for L levels with widths w[0..L-1] and 2 input channels:

    encoder level i:  conv3x3 -> ReLU -> conv3x3 -> ReLU   (enc{i}.conv1/conv2)
                      maxpool2 between levels, level L-1 is the bottleneck
    decoder level i:  upsample2 -> conv3x3 -> ReLU          (dec{i}.up)
                      concat(skip_i, up) -> conv3x3 -> ReLU -> conv3x3 -> ReLU
                                                             (dec{i}.conv1/conv2)
    head:             conv1x1 to one channel, no activation  (head)

There are no normalization layers. Convolutions accumulate in float64 and
store float32.
"""

import logging
import math
import struct
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .errors import (
    BadMagic,
    ChecksumMismatch,
    FormatError,
    IncompleteWeights,
    IoFailure,
    OddDimension,
    ShapeMismatch,
    TruncatedData,
)
from .models import Tensor5

logger = logging.getLogger(__name__)

WEIGHTS_MAGIC = b"UNW1"
DEFAULT_WIDTHS: Tuple[int, ...] = (8, 16, 32, 64, 128)
IN_CHANNELS = 2
MAX_NDIM = 8

# upper bound on elements in one shifted slab inside conv3d
_SLAB_ELEMENTS = 1 << 22

PathLike = Union[str, Path]


# =============================================================================
# Kernels
# =============================================================================


def _require_tensor(x: np.ndarray, what: str = "input") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeMismatch(f"{what} must be (channels, dx, dy, dz), got shape {x.shape}")
    return x


def conv3d(input: Tensor5, kernel: np.ndarray, bias: np.ndarray) -> Tensor5:
    """
    Shape-preserving 3D cross-correlation with zero padding, stride 1.

    Args:
        input: (in_ch, dx, dy, dz)
        kernel: (out_ch, in_ch, k, k, k) with odd k; padding is k // 2
        bias: (out_ch,)

    Returns:
        (out_ch, dx, dy, dz) float32
    """
    x = _require_tensor(input)
    kernel = np.asarray(kernel)
    bias = np.asarray(bias)
    if kernel.ndim != 5 or kernel.shape[2:] != (kernel.shape[2],) * 3 or kernel.shape[2] % 2 == 0:
        raise ShapeMismatch(f"kernel must be (out, in, k, k, k) with odd k, got {kernel.shape}")
    out_ch, in_ch, k = kernel.shape[0], kernel.shape[1], kernel.shape[2]
    if in_ch != x.shape[0]:
        raise ShapeMismatch(f"kernel expects {in_ch} input channels, input has {x.shape[0]}")
    if bias.shape != (out_ch,):
        raise ShapeMismatch(f"bias must have shape ({out_ch},), got {bias.shape}")

    pad = k // 2
    _, nx, ny, nz = x.shape
    padded = np.pad(x.astype(np.float64), ((0, 0), (pad, pad), (pad, pad), (pad, pad)))
    weights = kernel.astype(np.float64)
    out = np.empty((out_ch, nx, ny, nz), dtype=np.float64)

    chunk = max(1, _SLAB_ELEMENTS // max(1, in_ch * ny * nz))
    for x0 in range(0, nx, chunk):
        x1 = min(nx, x0 + chunk)
        acc = np.zeros((out_ch, x1 - x0, ny, nz), dtype=np.float64)
        for a in range(k):
            for b in range(k):
                for c in range(k):
                    slab = padded[:, x0 + a : x1 + a, b : b + ny, c : c + nz]
                    acc += np.tensordot(weights[:, :, a, b, c], slab, axes=(1, 0))
        out[:, x0:x1] = acc
    out += bias.astype(np.float64)[:, None, None, None]
    return out.astype(np.float32)


def relu(x: Tensor5) -> Tensor5:
    """Elementwise max(x, 0) in float32."""
    return np.maximum(x, 0, dtype=np.float32)


def maxpool2(input: Tensor5) -> Tensor5:
    """Max over non-overlapping 2x2x2 blocks."""
    x = _require_tensor(input)
    c, nx, ny, nz = x.shape
    if nx % 2 or ny % 2 or nz % 2:
        raise OddDimension(f"spatial dims must be even for maxpool2, got {(nx, ny, nz)}")
    blocks = x.reshape(c, nx // 2, 2, ny // 2, 2, nz // 2, 2)
    return blocks.max(axis=(2, 4, 6))


def upsample2_nearest(input: Tensor5) -> Tensor5:
    """Replicate every voxel into a 2x2x2 block."""
    x = _require_tensor(input)
    return x.repeat(2, axis=1).repeat(2, axis=2).repeat(2, axis=3)


# =============================================================================
# Weights
# =============================================================================


def expected_shapes(
    widths: Sequence[int],
    in_channels: int = IN_CHANNELS,
) -> "OrderedDict[str, Tuple[int, ...]]":
    """Tensor names and shapes of a complete U-Net with the given widths."""
    if not widths or any(w < 1 for w in widths):
        raise ValueError(f"widths must be positive, got {widths!r}")
    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()

    def conv(name: str, cin: int, cout: int, k: int = 3) -> None:
        shapes[f"{name}.weight"] = (cout, cin, k, k, k)
        shapes[f"{name}.bias"] = (cout,)

    cin = in_channels
    for i, w in enumerate(widths):
        conv(f"enc{i}.conv1", cin, w)
        conv(f"enc{i}.conv2", w, w)
        cin = w
    for i in reversed(range(len(widths) - 1)):
        conv(f"dec{i}.up", widths[i + 1], widths[i])
        conv(f"dec{i}.conv1", 2 * widths[i], widths[i])
        conv(f"dec{i}.conv2", widths[i], widths[i])
    conv("head", widths[0], 1, k=1)
    return shapes


def parameter_count(widths: Sequence[int], in_channels: int = IN_CHANNELS) -> int:
    """
    Closed-form parameter count.

    Each k^3 convolution from cin to cout holds cout * cin * k^3 + cout values.
    """
    def conv(cin: int, cout: int, k: int = 3) -> int:
        return cout * cin * k ** 3 + cout

    total = 0
    cin = in_channels
    for w in widths:
        total += conv(cin, w) + conv(w, w)
        cin = w
    for i in range(len(widths) - 1):
        w = widths[i]
        total += conv(widths[i + 1], w) + conv(2 * w, w) + conv(w, w)
    return total + conv(widths[0], 1, k=1)


@dataclass
class ModelWeights:
    """Ordered named float32 tensors forming one U-Net instance."""

    tensors: Dict[str, np.ndarray] = field(default_factory=OrderedDict)

    def __post_init__(self):
        self.tensors = OrderedDict(
            (name, np.ascontiguousarray(t, dtype=np.float32)) for name, t in self.tensors.items()
        )
        self.validate()

    @property
    def levels(self) -> int:
        count = 0
        while f"enc{count}.conv1.weight" in self.tensors:
            count += 1
        return count

    @property
    def widths(self) -> Tuple[int, ...]:
        return tuple(
            int(self.tensors[f"enc{i}.conv1.weight"].shape[0]) for i in range(self.levels)
        )

    @property
    def in_channels(self) -> int:
        return int(self.tensors["enc0.conv1.weight"].shape[1])

    @property
    def parameter_count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def validate(self) -> None:
        """
        Check that the tensors form a complete, consistent U-Net.

        Raises:
            IncompleteWeights: missing, unexpected or misshapen tensors
        """
        if self.levels < 1:
            raise IncompleteWeights("no enc0.conv1.weight tensor")
        try:
            expected = expected_shapes(self.widths, self.in_channels)
        except ValueError as exc:
            raise IncompleteWeights(str(exc)) from exc
        missing = [n for n in expected if n not in self.tensors]
        extra = [n for n in self.tensors if n not in expected]
        if missing or extra:
            raise IncompleteWeights(f"missing tensors {missing}, unexpected tensors {extra}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise IncompleteWeights(
                    f"{name} has shape {self.tensors[name].shape}, expected {shape}"
                )

    def manifest(self) -> dict:
        return {
            "levels": self.levels,
            "widths": list(self.widths),
            "in_channels": self.in_channels,
            "tensors": [{"name": n, "shape": list(t.shape)} for n, t in self.tensors.items()],
            "parameters": self.parameter_count,
        }


def init_weights_random(
    levels: int = len(DEFAULT_WIDTHS),
    base_width: int = DEFAULT_WIDTHS[0],
    seed: int = 0,
    in_channels: int = IN_CHANNELS,
) -> ModelWeights:
    """
    He-normal initialization: weights ~ N(0, 2 / fan_in), biases zero.

    Widths double per level starting from base_width.
    """
    if levels < 1 or base_width < 1:
        raise ValueError("levels and base_width must be positive")
    widths = [base_width * 2 ** i for i in range(levels)]
    rng = np.random.default_rng(seed)
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, shape in expected_shapes(widths, in_channels).items():
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:]))
            std = np.sqrt(2.0 / fan_in)
            tensors[name] = (rng.standard_normal(shape) * std).astype(np.float32)
    return ModelWeights(tensors)


def encode_weights(weights: ModelWeights) -> bytes:
    """Serialize to UNW1 bytes."""
    parts = [WEIGHTS_MAGIC, struct.pack("<I", len(weights.tensors))]
    for name, tensor in weights.tensors.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", tensor.ndim))
        parts.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        parts.append(tensor.astype("<f4").tobytes(order="C"))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_weights(raw: bytes) -> ModelWeights:
    """
    Parse UNW1 bytes.

    Raises:
        BadMagic, ChecksumMismatch, TruncatedData, IncompleteWeights
    """
    if raw[:4] != WEIGHTS_MAGIC:
        raise BadMagic(f"expected magic {WEIGHTS_MAGIC!r}, got {bytes(raw[:4])!r}")
    if len(raw) < 12:
        raise TruncatedData("weight file too short for count and checksum")
    body, (stored_crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise ChecksumMismatch("weight file checksum does not match")

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    try:
        (count,) = struct.unpack_from("<I", body, 4)
        pos = 8
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = bytes(body[pos : pos + name_len]).decode("utf-8")
            if len(name.encode("utf-8")) != name_len:
                raise TruncatedData("tensor name runs past end of file")
            pos += name_len
            (ndim,) = struct.unpack_from("<B", body, pos)
            pos += 1
            if ndim > MAX_NDIM:
                raise FormatError(f"tensor {name!r} has {ndim} dimensions")
            shape = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            size = math.prod(shape) * 4
            if pos + size > len(body):
                raise TruncatedData(f"tensor {name!r} payload runs past end of file")
            data = np.frombuffer(body, dtype="<f4", count=size // 4, offset=pos)
            pos += size
            if name in tensors:
                raise IncompleteWeights(f"duplicate tensor {name!r}")
            tensors[name] = data.reshape(shape).astype(np.float32)
    except struct.error as exc:
        raise TruncatedData(f"weight file ends early: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise FormatError(f"tensor name is not UTF-8: {exc}") from exc
    if pos != len(body):
        raise FormatError(f"{len(body) - pos} trailing bytes before checksum")
    try:
        return ModelWeights(tensors)
    except (KeyError, IndexError) as exc:
        raise IncompleteWeights(f"inconsistent tensor set: {exc}") from exc


def save_weights(weights: ModelWeights, path: PathLike) -> None:
    """
    Write weights as a UNW1 file.

    Raises:
        IoFailure: the file cannot be written
    """
    try:
        Path(path).write_bytes(encode_weights(weights))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_weights(path: PathLike) -> ModelWeights:
    """
    Read and validate a UNW1 file.

    Raises:
        IoFailure: the file cannot be read
        FormatError: see decode_weights
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    weights = decode_weights(raw)
    logger.debug("loaded %s: levels=%d widths=%s", path, weights.levels, weights.widths)
    return weights


# =============================================================================
# Forward pass
# =============================================================================


def _conv(weights: ModelWeights, name: str, x: Tensor5) -> Tensor5:
    return conv3d(x, weights.tensors[f"{name}.weight"], weights.tensors[f"{name}.bias"])


def unet_forward(weights: ModelWeights, patch: Tensor5) -> Tensor5:
    """
    Run the U-Net on one patch.

    Args:
        weights: Validated model weights
        patch: (in_channels, dx, dy, dz), each spatial dim divisible by
            2 ** (levels - 1)

    Returns:
        (1, dx, dy, dz) float32 logits, no activation applied
    """
    x = _require_tensor(patch, "patch").astype(np.float32, copy=False)
    levels = weights.levels
    if x.shape[0] != weights.in_channels:
        raise ShapeMismatch(f"patch has {x.shape[0]} channels, model expects {weights.in_channels}")
    factor = 2 ** (levels - 1)
    if any(n % factor for n in x.shape[1:]):
        raise ShapeMismatch(f"spatial dims {x.shape[1:]} must be divisible by {factor}")

    skips: List[Tensor5] = []
    for i in range(levels):
        x = relu(_conv(weights, f"enc{i}.conv1", x))
        x = relu(_conv(weights, f"enc{i}.conv2", x))
        if i < levels - 1:
            skips.append(x)
            x = maxpool2(x)

    for i in reversed(range(levels - 1)):
        x = relu(_conv(weights, f"dec{i}.up", upsample2_nearest(x)))
        x = np.concatenate([skips[i], x], axis=0)
        x = relu(_conv(weights, f"dec{i}.conv1", x))
        x = relu(_conv(weights, f"dec{i}.conv2", x))

    return _conv(weights, "head", x)
