"""
Reader and writer for a 3D subset of single-file NIfTI-1.

Only the header fields the pipeline needs are interpreted: dim, pixdim,
datatype, vox_offset and the scl_slope/scl_inter rescale. Orientation
matrices are ignored; axis order is (x, y, z) as stored, x fastest.
"""

import gzip
import logging
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .errors import IoFailure, MalformedHeader, TruncatedData, UnsupportedDatatype
from .models import Mask3, Volume3

logger = logging.getLogger(__name__)

HEADER_SIZE = 348
DATA_OFFSET = 352
MAGIC = b"n+1\x00"
GZIP_MAGIC = b"\x1f\x8b"

DT_UINT8 = 2
DT_INT16 = 4
DT_FLOAT32 = 16

DATATYPES = {
    DT_UINT8: np.dtype(np.uint8),
    DT_INT16: np.dtype(np.int16),
    DT_FLOAT32: np.dtype(np.float32),
}

# NIfTI-1 header layout, 348 bytes
HEADER_DTYPE = np.dtype(
    [
        ("sizeof_hdr", "i4"),
        ("data_type", "S10"),
        ("db_name", "S18"),
        ("extents", "i4"),
        ("session_error", "i2"),
        ("regular", "S1"),
        ("dim_info", "u1"),
        ("dim", "i2", (8,)),
        ("intent_p1", "f4"),
        ("intent_p2", "f4"),
        ("intent_p3", "f4"),
        ("intent_code", "i2"),
        ("datatype", "i2"),
        ("bitpix", "i2"),
        ("slice_start", "i2"),
        ("pixdim", "f4", (8,)),
        ("vox_offset", "f4"),
        ("scl_slope", "f4"),
        ("scl_inter", "f4"),
        ("slice_end", "i2"),
        ("slice_code", "u1"),
        ("xyzt_units", "u1"),
        ("cal_max", "f4"),
        ("cal_min", "f4"),
        ("slice_duration", "f4"),
        ("toffset", "f4"),
        ("glmax", "i4"),
        ("glmin", "i4"),
        ("descrip", "S80"),
        ("aux_file", "S24"),
        ("qform_code", "i2"),
        ("sform_code", "i2"),
        ("quatern_b", "f4"),
        ("quatern_c", "f4"),
        ("quatern_d", "f4"),
        ("qoffset_x", "f4"),
        ("qoffset_y", "f4"),
        ("qoffset_z", "f4"),
        ("srow_x", "f4", (4,)),
        ("srow_y", "f4", (4,)),
        ("srow_z", "f4", (4,)),
        ("intent_name", "S16"),
        ("magic", "S4"),
    ]
)
assert HEADER_DTYPE.itemsize == HEADER_SIZE

PathLike = Union[str, Path]


@dataclass(frozen=True)
class NiftiHeader:
    """The interpreted part of a NIfTI-1 header."""

    dims: Tuple[int, int, int]
    pixdim: Tuple[float, float, float]
    datatype_code: int
    scl_slope: float = 1.0
    scl_inter: float = 0.0
    vox_offset: int = DATA_OFFSET
    byteorder: str = "<"

    @property
    def dtype(self) -> np.dtype:
        return DATATYPES[self.datatype_code].newbyteorder(self.byteorder)

    @property
    def payload_size(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) * self.dtype.itemsize

    @property
    def has_rescale(self) -> bool:
        return not (self.scl_slope == 1.0 and self.scl_inter == 0.0)


def parse_header(raw: bytes) -> NiftiHeader:
    """Decode and validate the first 348 bytes of a NIfTI-1 file."""
    if len(raw) < HEADER_SIZE:
        raise MalformedHeader(f"header needs {HEADER_SIZE} bytes, got {len(raw)}")

    byteorder = "<"
    hdr = np.frombuffer(raw[:HEADER_SIZE], dtype=HEADER_DTYPE.newbyteorder("<"))[0]
    if int(hdr["sizeof_hdr"]) != HEADER_SIZE:
        swapped = np.frombuffer(raw[:HEADER_SIZE], dtype=HEADER_DTYPE.newbyteorder(">"))[0]
        if int(swapped["sizeof_hdr"]) != HEADER_SIZE:
            raise MalformedHeader(f"sizeof_hdr is {int(hdr['sizeof_hdr'])}, expected 348")
        hdr, byteorder = swapped, ">"

    if bytes(hdr["magic"]).ljust(4, b"\x00") != MAGIC:
        raise MalformedHeader(f"bad magic {bytes(hdr['magic'])!r}, expected single-file n+1")

    dim = [int(d) for d in hdr["dim"]]
    if dim[0] != 3:
        raise MalformedHeader(f"only 3D images are supported, dim[0] is {dim[0]}")
    dims = tuple(dim[1:4])
    if any(d < 1 for d in dims):
        raise MalformedHeader(f"dimensions must be positive, got {dims}")

    pixdim = tuple(float(p) for p in hdr["pixdim"][1:4])
    if not all(np.isfinite(p) and p > 0 for p in pixdim):
        raise MalformedHeader(f"pixdim must be positive, got {pixdim}")

    code = int(hdr["datatype"])
    if code not in DATATYPES:
        raise UnsupportedDatatype(f"datatype code {code} is not one of uint8/int16/float32")

    offset = float(hdr["vox_offset"])
    if not np.isfinite(offset) or offset < DATA_OFFSET or offset != int(offset):
        raise MalformedHeader(f"vox_offset {offset} must be an integer >= {DATA_OFFSET}")

    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    # slope 0 or NaN means "no scaling" in NIfTI-1
    if slope == 0.0 or not np.isfinite(slope):
        slope, inter = 1.0, 0.0
    if not np.isfinite(inter):
        inter = 0.0

    return NiftiHeader(
        dims=dims,  # type: ignore[arg-type]
        pixdim=pixdim,  # type: ignore[arg-type]
        datatype_code=code,
        scl_slope=slope,
        scl_inter=inter,
        vox_offset=int(offset),
        byteorder=byteorder,
    )


def _read_bytes(path: Path) -> bytes:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if raw[:2] != GZIP_MAGIC:
        return raw
    try:
        return gzip.decompress(raw)
    except (OSError, EOFError, zlib.error) as exc:
        raise MalformedHeader(f"corrupt gzip stream in {path}: {exc}") from exc


def decode_nifti(raw: bytes, kind: Optional[str] = None) -> Union[Volume3, Mask3]:
    """
    Decode an uncompressed NIfTI-1 byte string.

    Args:
        raw: File contents
        kind: "volume", "mask", or None to return a Mask3 only for
            unscaled uint8 data holding {0, 1}

    Returns:
        Volume3 or Mask3
    """
    header = parse_header(raw)
    end = header.vox_offset + header.payload_size
    if len(raw) < end:
        raise TruncatedData(
            f"payload needs {header.payload_size} bytes at offset {header.vox_offset}, "
            f"file has {max(0, len(raw) - header.vox_offset)}"
        )

    stored = np.frombuffer(raw, dtype=header.dtype, count=int(np.prod(header.dims)),
                           offset=header.vox_offset)
    stored = stored.reshape(header.dims, order="F")

    if kind is None:
        binary = (
            header.datatype_code == DT_UINT8
            and not header.has_rescale
            and stored.max() <= 1
        )
        kind = "mask" if binary else "volume"

    if header.has_rescale:
        values = stored.astype(np.float64) * header.scl_slope + header.scl_inter
    else:
        values = stored

    if kind == "mask":
        return Mask3(np.ascontiguousarray(values != 0), header.pixdim)
    return Volume3(np.ascontiguousarray(values, dtype=np.float32), header.pixdim)


def read_nifti(path: PathLike, kind: Optional[str] = None) -> Union[Volume3, Mask3]:
    """
    Read a .nii or .nii.gz file.

    Compression is detected from the gzip magic, not the file name.
    """
    path = Path(path)
    grid = decode_nifti(_read_bytes(path), kind)
    logger.debug("read %s: shape=%s spacing=%s", path, grid.shape, grid.spacing)
    return grid


def read_volume(path: PathLike) -> Volume3:
    """Read a CT volume as float32 HU."""
    return read_nifti(path, kind="volume")  # type: ignore[return-value]


def read_mask(path: PathLike) -> Mask3:
    """Read a label file as a binary mask; any non-zero value is foreground."""
    return read_nifti(path, kind="mask")  # type: ignore[return-value]


def encode_nifti(grid: Union[Volume3, Mask3]) -> bytes:
    """Serialize a grid as uncompressed single-file NIfTI-1 bytes."""
    if isinstance(grid, Mask3):
        code, payload = DT_UINT8, grid.data.astype("<u1")
    else:
        code, payload = DT_FLOAT32, grid.data.astype("<f4")

    hdr = np.zeros((), dtype=HEADER_DTYPE.newbyteorder("<"))
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    hdr["dim"] = [3, *grid.shape, 1, 1, 1, 1]
    hdr["datatype"] = code
    hdr["bitpix"] = payload.dtype.itemsize * 8
    hdr["pixdim"] = [1.0, *grid.spacing, 0.0, 0.0, 0.0, 0.0]
    hdr["vox_offset"] = DATA_OFFSET
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # millimetres
    hdr["magic"] = MAGIC

    extension = b"\x00" * (DATA_OFFSET - HEADER_SIZE)
    return hdr.tobytes() + extension + payload.tobytes(order="F")


def write_nifti(grid: Union[Volume3, Mask3], path: PathLike) -> None:
    """
    Write a grid to disk; a ".gz" suffix selects gzip compression.

    Masks are stored as uint8 {0, 1}, volumes as float32.

    Raises:
        IoFailure: path is empty or not writable
    """
    if not str(path):
        raise IoFailure("output path is empty")
    path = Path(path)
    data = encode_nifti(grid)
    if path.suffix == ".gz":
        # fixed mtime keeps reruns byte-identical
        data = gzip.compress(data, mtime=0)
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    logger.debug("wrote %s (%d bytes)", path, len(data))
