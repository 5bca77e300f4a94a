"""Flat binary grids, CSV curves, and PPM images.

Everything the pipeline persists moves through three small formats:

* ``.duv`` grid: 4-byte magic ``DUV1``, uint32 ndim (1..4), one uint32
  extent per axis, then float32 little-endian values in row-major order
  (last axis fastest).  A write/read round trip is bit exact for finite
  payloads; NaN is legal and marks invalid pixels in ground-truth depth.
* CSV: comma separated, ``.`` decimal, LF line endings.  Floats are
  written with their shortest exact decimal form, so a reparse recovers
  the value bit for bit.
* PPM: binary P6, 8 bits per channel, values clamped to [0, 1] and
  rounded half-up.

In-memory arrays are float64; conversion to float32 happens only at the
file boundary.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"DUV1"
MAX_NDIM = 4
# caps the element count so dims cannot describe a payload we would
# never accept anyway (2^31 floats ~ 8 GiB)
MAX_ELEMENTS = 1 << 31


class GridFormatError(ValueError):
    """A .duv file violates the format contract.

    The message always carries the byte offset at which the problem was
    detected.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class GridFile:
    """A decoded grid: extents plus the float64 payload."""

    dims: tuple[int, ...]
    values: np.ndarray


def write_grid(path, dims, values=None) -> None:
    """Serialize ``values`` to ``path`` in the DUV1 layout.

    ``dims`` gives the extents (rank 1..4, every extent >= 1) and must
    multiply out to the number of values.  ``values`` may be flat or
    already shaped, and may hold non-finite entries.  For convenience
    ``write_grid(path, array)`` uses the array's own shape.
    """
    if values is None:
        values = dims
        dims = np.asarray(values).shape
    dims = tuple(int(d) for d in dims)
    if len(dims) < 1 or len(dims) > MAX_NDIM:
        raise ValueError(f"grid rank must be 1..{MAX_NDIM}, got {len(dims)}")
    if any(d < 1 for d in dims):
        raise ValueError(f"grid extents must be >= 1, got {dims}")
    count = 1
    for d in dims:
        count *= d
    if count > MAX_ELEMENTS:
        raise ValueError(f"grid too large: {count} elements")
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size != count:
        raise ValueError(f"dims {dims} need {count} values, got {arr.size}")
    header = MAGIC + struct.pack("<I", len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims)
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_grid(path) -> GridFile:
    """Parse a DUV1 file; raises GridFormatError with a byte offset."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise GridFormatError(f"bad magic {blob[:4]!r}, want {MAGIC!r}", 0)
    if len(blob) < 8:
        raise GridFormatError("truncated header: missing ndim", 4)
    (ndim,) = struct.unpack_from("<I", blob, 4)
    if ndim < 1 or ndim > MAX_NDIM:
        raise GridFormatError(f"ndim {ndim} outside 1..{MAX_NDIM}", 4)
    if len(blob) < 8 + 4 * ndim:
        raise GridFormatError("truncated header: missing dims", len(blob))
    dims = struct.unpack_from(f"<{ndim}I", blob, 8)
    count = 1
    for i, d in enumerate(dims):
        if d < 1:
            raise GridFormatError(f"dim[{i}] = {d} invalid", 8 + 4 * i)
        count *= d
        if count > MAX_ELEMENTS:
            raise GridFormatError(f"dims overflow: product exceeds {MAX_ELEMENTS}", 8 + 4 * i)
    payload_at = 8 + 4 * ndim
    expected = payload_at + 4 * count
    if len(blob) < expected:
        raise GridFormatError(
            f"truncated payload: want {expected} bytes, have {len(blob)}", len(blob)
        )
    if len(blob) > expected:
        raise GridFormatError("trailing bytes after payload", expected)
    flat = np.frombuffer(blob, dtype="<f4", count=count, offset=payload_at)
    values = flat.astype(np.float64).reshape(dims)
    return GridFile(dims=tuple(int(d) for d in dims), values=values)


def valid_mask(gt) -> np.ndarray:
    """Pixel validity for a ground-truth depth map: finite and > 0."""
    arr = np.asarray(gt, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        return np.isfinite(arr) & (arr > 0.0)


def _format_float(v: float) -> str:
    # repr gives the shortest decimal that parses back to the same
    # float64, so no precision is lost in the file
    return repr(float(v))


def write_csv_curve(path, columns: dict) -> None:
    """Write named, equal-length numeric columns as CSV.

    Header row of names, one row per index, LF endings.  Column names
    must not contain commas or line breaks.
    """
    if not columns:
        raise ValueError("no columns to write")
    names = list(columns.keys())
    for name in names:
        if "," in name or "\n" in name or "\r" in name:
            raise ValueError(f"illegal column name {name!r}")
    cols = [np.asarray(columns[n], dtype=np.float64).ravel() for n in names]
    n = cols[0].size
    if any(c.size != n for c in cols):
        raise ValueError("ragged columns: " + ", ".join(f"{m}={c.size}" for m, c in zip(names, cols)))
    lines = [",".join(names)]
    for i in range(n):
        lines.append(",".join(_format_float(c[i]) for c in cols))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_ppm(path, width: int, height: int, rgb) -> None:
    """Write a binary P6 image from float RGB in [0, 1].

    ``rgb`` must hold height*width*3 values in row-major pixel order.
    Values are clamped then rounded half-up to 8 bits (0.5 -> 128).
    """
    width = int(width)
    height = int(height)
    if width < 1 or height < 1:
        raise ValueError(f"image dims must be >= 1, got {width}x{height}")
    arr = np.asarray(rgb, dtype=np.float64).ravel()
    if arr.size != width * height * 3:
        raise ValueError(f"need {width * height * 3} values, got {arr.size}")
    clamped = np.clip(arr, 0.0, 1.0)
    # floor(x + 0.5) is round-half-up; np.round would round half to even
    bytes8 = np.floor(clamped * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(bytes8.tobytes())
