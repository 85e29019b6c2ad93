"""Binary speckle-frame container and plain-text image export.

The container is deliberately minimal: an 18-byte header (magic
``GIFR``, format version, width, height, frame count) followed by the
frames as row-major little-endian float64.  Round trips are bit-exact.
Ghost images are single-frame files of the same format; for quick
inspection they can also be written as 16-bit ASCII PGM.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

MAGIC = b"GIFR"
VERSION = 1

_HEADER = struct.Struct("<4sHIII")


class FrameFormatError(ValueError):
    """The file is not a valid frame container."""


def write_frames(path: str | Path, frames: Iterable[np.ndarray]) -> int:
    """Write a sequence of equally shaped 2-D frames; returns the count.

    The frame count is patched into the header after the stream is
    exhausted, so generators can be written without materializing them.
    """
    path = Path(path)
    count = 0
    width = height = 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 0, 0, 0))
        for frame in frames:
            arr = np.ascontiguousarray(frame, dtype="<f8")
            if arr.ndim != 2:
                raise ValueError(f"frames must be 2-D, got {arr.ndim}-D")
            if count == 0:
                height, width = arr.shape
            elif arr.shape != (height, width):
                raise ValueError(
                    f"frame {count} shape {arr.shape} differs from first frame "
                    f"{(height, width)}"
                )
            fh.write(arr.tobytes())
            count += 1
        fh.seek(0)
        fh.write(_HEADER.pack(MAGIC, VERSION, width, height, count))
    return count


def _read_header(data: bytes, path: Path) -> tuple[int, int, int]:
    if len(data) < _HEADER.size:
        raise FrameFormatError(
            f"{path}: only {len(data)} bytes, shorter than the {_HEADER.size}-byte header"
        )
    magic, version, width, height, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FrameFormatError(
            f"{path}: bad magic {magic!r}, expected {MAGIC!r}"
        )
    if version != VERSION:
        raise FrameFormatError(
            f"{path}: unsupported format version {version}, expected {VERSION}"
        )
    return width, height, count


def read_frames(path: str | Path) -> np.ndarray:
    """Read a frame container into an array of shape (count, height, width)."""
    path = Path(path)
    data = path.read_bytes()
    width, height, count = _read_header(data, path)
    expected = _HEADER.size + 8 * width * height * count
    if len(data) < expected:
        raise FrameFormatError(
            f"{path}: truncated payload, {len(data)} bytes but header promises {expected}"
        )
    if len(data) > expected:
        raise FrameFormatError(
            f"{path}: {len(data) - expected} trailing bytes beyond the declared payload"
        )
    payload = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    return payload.reshape(count, height, width).astype(np.float64)


def iter_frames(path: str | Path) -> Iterator[np.ndarray]:
    """Yield frames one at a time without loading the whole file."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        width, height, count = _read_header(header, path)
        frame_bytes = 8 * width * height
        for index in range(count):
            chunk = fh.read(frame_bytes)
            if len(chunk) < frame_bytes:
                raise FrameFormatError(
                    f"{path}: truncated at frame {index} of {count}"
                )
            yield np.frombuffer(chunk, dtype="<f8").reshape(height, width).astype(np.float64)


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Write a 2-D array as 16-bit ASCII PGM, min-max scaled.

    A constant image maps to all zeros.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"image must be 2-D, got {arr.ndim}-D")
    lo = float(arr.min())
    hi = float(arr.max())
    if hi > lo:
        scaled = np.rint((arr - lo) / (hi - lo) * 65535.0).astype(np.uint16)
    else:
        scaled = np.zeros(arr.shape, dtype=np.uint16)
    height, width = arr.shape
    lines = ["P2", f"{width} {height}", "65535"]
    for row in scaled:
        # Keep lines short enough for strict PGM readers.
        for start in range(0, width, 16):
            lines.append(" ".join(str(v) for v in row[start : start + 16]))
    Path(path).write_text("\n".join(lines) + "\n")
