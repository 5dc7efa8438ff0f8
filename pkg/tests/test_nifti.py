"""
Tests for NIfTI-1 reading and writing.
"""

import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings, HealthCheck, strategies as st

from tubeseg.errors import (
    FormatError,
    IoFailure,
    MalformedHeader,
    TruncatedData,
    UnsupportedDatatype,
)
from tubeseg.models import Mask3, Volume3
from tubeseg.nifti import (
    DATA_OFFSET,
    HEADER_DTYPE,
    HEADER_SIZE,
    decode_nifti,
    encode_nifti,
    parse_header,
    read_mask,
    read_nifti,
    read_volume,
    write_nifti,
)

# byte offsets of header fields
OFF_DIM = 40
OFF_DATATYPE = 70
OFF_PIXDIM = 76
OFF_VOX_OFFSET = 108
OFF_SCL_SLOPE = 112
OFF_SCL_INTER = 116
OFF_MAGIC = 344


def _patch(raw: bytes, offset: int, fmt: str, *values) -> bytes:
    buf = bytearray(raw)
    struct.pack_into(fmt, buf, offset, *values)
    return bytes(buf)


def _small_volume() -> Volume3:
    data = np.arange(4 * 3 * 2, dtype=np.float32).reshape(4, 3, 2) - 10.5
    return Volume3(data, (0.5, 1.0, 2.5))


class TestRoundTrip:
    """Sanity tests for encode/decode."""

    @pytest.mark.sanity
    def test_volume_round_trip(self, tmp_path):
        """Test a float volume survives a write and read bit-exactly."""
        vol = _small_volume()
        path = tmp_path / "vol.nii"
        write_nifti(vol, path)
        back = read_volume(path)
        assert back.spacing == vol.spacing
        np.testing.assert_array_equal(back.data, vol.data)

    @pytest.mark.sanity
    def test_gzip_round_trip(self, tmp_path, cube_mask):
        """Test .nii.gz files are compressed and read back."""
        path = tmp_path / "mask.nii.gz"
        write_nifti(cube_mask, path)
        assert path.read_bytes()[:2] == b"\x1f\x8b"
        back = read_mask(path)
        np.testing.assert_array_equal(back.data, cube_mask.data)

    @pytest.mark.sanity
    def test_mask_written_as_uint8(self, cube_mask):
        """Test masks use datatype 2 and auto-detect as masks."""
        raw = encode_nifti(cube_mask)
        header = parse_header(raw)
        assert header.datatype_code == 2
        assert len(raw) == DATA_OFFSET + int(np.prod(cube_mask.shape))
        assert isinstance(decode_nifti(raw), Mask3)

    @pytest.mark.sanity
    def test_x_fastest_layout(self):
        """Test voxels are stored with x varying fastest."""
        data = np.zeros((2, 2, 1), dtype=np.float32)
        data[1, 0, 0] = 7.0
        raw = encode_nifti(Volume3(data))
        payload = np.frombuffer(raw[DATA_OFFSET:], dtype="<f4")
        assert payload[1] == 7.0

    @pytest.mark.sanity
    def test_gzip_is_deterministic(self, tmp_path, cube_mask):
        """Test two writes of the same grid are byte-identical."""
        a, b = tmp_path / "a.nii.gz", tmp_path / "b.nii.gz"
        write_nifti(cube_mask, a)
        write_nifti(cube_mask, b)
        assert a.read_bytes() == b.read_bytes()

    @pytest.mark.sanity
    def test_compression_sniffed_from_content(self, tmp_path):
        """Test a gzip file without the .gz suffix is still read."""
        path = tmp_path / "vol.nii"
        path.write_bytes(gzip.compress(encode_nifti(_small_volume())))
        assert read_nifti(path).shape == (4, 3, 2)


class TestHeaderFields:
    """Tests for interpreted header fields."""

    @pytest.mark.unit
    def test_int16_with_rescale(self):
        """Test int16 data is rescaled by slope and intercept."""
        raw = encode_nifti(Volume3(np.zeros((2, 2, 2))))
        raw = _patch(raw[:DATA_OFFSET], OFF_DATATYPE, "<h", 4)
        raw = _patch(raw, OFF_SCL_SLOPE, "<ff", 2.0, -1024.0)
        raw += np.arange(8, dtype="<i2").tobytes()
        vol = decode_nifti(raw)
        assert isinstance(vol, Volume3)
        assert vol.data[1, 0, 0] == pytest.approx(2.0 * 1 - 1024.0)

    @pytest.mark.unit
    def test_zero_slope_means_no_scaling(self):
        """Test scl_slope 0 leaves stored values unchanged."""
        raw = encode_nifti(_small_volume())
        raw = _patch(raw, OFF_SCL_SLOPE, "<ff", 0.0, 50.0)
        np.testing.assert_array_equal(decode_nifti(raw).data, _small_volume().data)

    @pytest.mark.unit
    def test_big_endian_header(self):
        """Test a byte-swapped file is read correctly."""
        vol = _small_volume()
        raw = encode_nifti(vol)
        hdr = np.frombuffer(raw[:HEADER_SIZE], dtype=HEADER_DTYPE.newbyteorder("<"))
        swapped = hdr.astype(hdr.dtype.newbyteorder(">")).tobytes()
        payload = vol.data.astype(">f4").tobytes(order="F")
        big = swapped + raw[HEADER_SIZE:DATA_OFFSET] + payload
        assert parse_header(big).byteorder == ">"
        np.testing.assert_array_equal(decode_nifti(big).data, vol.data)


class TestErrors:
    """Tests for structured parse errors."""

    @pytest.mark.unit
    def test_short_header(self):
        """Test fewer than 348 bytes is a malformed header."""
        with pytest.raises(MalformedHeader):
            decode_nifti(b"\x00" * 100)

    @pytest.mark.unit
    def test_bad_magic(self):
        """Test a wrong magic string is rejected."""
        raw = _patch(encode_nifti(_small_volume()), OFF_MAGIC, "4s", b"ni1\x00")
        with pytest.raises(MalformedHeader):
            decode_nifti(raw)

    @pytest.mark.unit
    def test_not_3d(self):
        """Test dim[0] other than 3 is rejected."""
        raw = _patch(encode_nifti(_small_volume()), OFF_DIM, "<h", 4)
        with pytest.raises(MalformedHeader):
            decode_nifti(raw)

    @pytest.mark.unit
    def test_zero_dimension(self):
        """Test a zero-length axis is rejected."""
        raw = _patch(encode_nifti(_small_volume()), OFF_DIM + 2, "<h", 0)
        with pytest.raises(MalformedHeader):
            decode_nifti(raw)

    @pytest.mark.unit
    def test_negative_pixdim(self):
        """Test non-positive spacing is rejected."""
        raw = _patch(encode_nifti(_small_volume()), OFF_PIXDIM + 4, "<f", -1.0)
        with pytest.raises(MalformedHeader):
            decode_nifti(raw)

    @pytest.mark.unit
    def test_unsupported_datatype(self):
        """Test float64 data is not supported."""
        raw = _patch(encode_nifti(_small_volume()), OFF_DATATYPE, "<h", 64)
        with pytest.raises(UnsupportedDatatype):
            decode_nifti(raw)

    @pytest.mark.unit
    def test_truncated_payload(self):
        """Test a payload shorter than declared."""
        raw = encode_nifti(_small_volume())
        with pytest.raises(TruncatedData):
            decode_nifti(raw[:-1])

    @pytest.mark.unit
    def test_bad_vox_offset(self):
        """Test vox_offset below 352 is rejected."""
        raw = _patch(encode_nifti(_small_volume()), OFF_VOX_OFFSET, "<f", 100.0)
        with pytest.raises(MalformedHeader):
            decode_nifti(raw)

    @pytest.mark.unit
    def test_write_to_missing_directory(self, tmp_path, cube_mask):
        """Test unwritable paths raise IoFailure."""
        with pytest.raises(IoFailure):
            write_nifti(cube_mask, tmp_path / "missing" / "mask.nii")

    @pytest.mark.unit
    def test_empty_path(self, cube_mask):
        """Test an empty output path raises IoFailure."""
        with pytest.raises(IoFailure):
            write_nifti(cube_mask, "")


class TestFuzz:
    """Mutated headers produce structured errors, never crashes."""

    VALID = encode_nifti(_small_volume())

    @pytest.mark.slow
    @settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(
        position=st.integers(min_value=0, max_value=HEADER_SIZE - 1),
        value=st.integers(min_value=0, max_value=255),
        cut=st.integers(min_value=0, max_value=DATA_OFFSET + 200),
    )
    def test_mutated_header(self, position, value, cut):
        """Test a single-byte mutation plus truncation."""
        raw = bytearray(self.VALID)
        raw[position] = value
        raw = bytes(raw[: max(cut, 0)]) if cut < len(raw) else bytes(raw)
        try:
            decoded = decode_nifti(raw)
        except FormatError:
            return
        assert decoded.data.ndim == 3

    @pytest.mark.slow
    @settings(max_examples=200, deadline=None)
    @given(st.binary(min_size=0, max_size=600))
    def test_random_bytes(self, raw):
        """Test arbitrary bytes are rejected with a FormatError."""
        try:
            decode_nifti(raw)
        except FormatError:
            pass
