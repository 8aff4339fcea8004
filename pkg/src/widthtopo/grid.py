"""Pixel grids: indices, neighborhoods, simplex sanitation and field I/O.

Scalar fields are plain ``(H, W)`` float64 arrays with values normalized to
[0, 1] at the I/O boundary. Soft segmentations are ``(L, H, W)`` arrays whose
channels sum to one at every pixel. Row-major linear indices
(``row * W + col``) are the tie-break order used throughout the package.
"""

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ._validation import check_channels, check_field

__all__ = [
    "PixelIndex",
    "NeighborhoodSpec",
    "FieldFormatError",
    "neighborhood",
    "window_stack",
    "project_simplex",
    "load_field",
    "save_field",
]

RAW_MAGIC = b"TWSF"
_RAW_HEADER = struct.Struct("<4sIII")


class FieldFormatError(ValueError):
    """Malformed or unsupported image file."""


class PixelIndex(NamedTuple):
    row: int
    col: int

    def linear(self, width):
        return self.row * width + self.col

    @classmethod
    def from_linear(cls, index, width):
        return cls(*divmod(int(index), width))


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Flat structuring element: a square (Chebyshev) or disc (Euclidean) of radius ``radius``."""

    shape: str = "square"
    radius: int = 1

    def __post_init__(self):
        if self.shape not in ("square", "disc"):
            raise ValueError(f"shape must be 'square' or 'disc', got {self.shape!r}")
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValueError(f"radius must be an integer >= 1, got {self.radius!r}")

    def offsets(self):
        """(dr, dc) offsets of the element, in row-major order."""
        return _offsets(self.shape, int(self.radius))


@lru_cache(maxsize=None)
def _offsets(shape, r):
    out = []
    for dr in range(-r, r + 1):
        for dc in range(-r, r + 1):
            if shape == "disc" and dr * dr + dc * dc > r * r:
                continue
            out.append((dr, dc))
    return tuple(out)


def neighborhood(x, spec, width, height):
    """Pixels of B(x, r) clipped to the image, sorted by linear index.

    >>> len(neighborhood(PixelIndex(0, 0), NeighborhoodSpec("square", 1), 5, 5))
    4
    """
    row, col = x
    if not (0 <= row < height and 0 <= col < width):
        raise IndexError(f"pixel {tuple(x)} outside {height}x{width} grid")
    pixels = [
        PixelIndex(row + dr, col + dc)
        for dr, dc in spec.offsets()
        if 0 <= row + dr < height and 0 <= col + dc < width
    ]
    # offsets are already row-major, so this is sorted by linear index
    return pixels


def window_stack(field, spec):
    """Stack every offset of ``spec`` over the image.

    Returns
    -------
    values : ndarray of shape (K, H, W)
        ``values[k, i, j] = field[i + dr_k, j + dc_k]`` (0 where out of bounds).
    mask : ndarray of bool, shape (K, H, W)
        True where the shifted pixel lies inside the image.
    """
    field = np.asarray(field, dtype=np.float64)
    h, w = field.shape
    offs = spec.offsets()
    values = np.zeros((len(offs), h, w))
    mask = np.zeros((len(offs), h, w), dtype=bool)
    for k, (dr, dc) in enumerate(offs):
        dst_r = slice(max(0, -dr), min(h, h - dr))
        dst_c = slice(max(0, -dc), min(w, w - dc))
        src_r = slice(max(0, dr), min(h, h + dr))
        src_c = slice(max(0, dc), min(w, w + dc))
        values[k, dst_r, dst_c] = field[src_r, src_c]
        mask[k, dst_r, dst_c] = True
    return values, mask


def project_simplex(channels):
    """Renormalize nonnegative channels so they sum to one per pixel.

    Pixels where every channel is zero become uniform ``1/L``.
    """
    arr = check_channels(channels)
    if arr.min() < 0:
        raise ValueError("channels must be nonnegative")
    total = arr.sum(axis=0)
    out = np.empty_like(arr)
    zero = total == 0
    np.divide(arr, total, out=out, where=~zero)
    out[:, zero] = 1.0 / arr.shape[0]
    return out


# --------------------------------------------------------------------------- I/O

def _infer_format(path, fmt):
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("pgm", "png", "raw"):
            raise ValueError(f"unknown format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        return "pgm"
    if suffix == ".png":
        return "png"
    if suffix in (".f32", ".raw", ".twsf"):
        return "raw"
    raise ValueError(f"cannot infer image format from {path!r}; pass format explicitly")


def _read_pgm(data):
    # P5 header: magic, width, height, maxval separated by whitespace, '#' comments allowed
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FieldFormatError("truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P5":
        raise FieldFormatError(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FieldFormatError("non-integer PGM header field") from None
    if width <= 0 or height <= 0:
        raise FieldFormatError(f"bad PGM dimensions {width}x{height}")
    if maxval != 255:
        raise FieldFormatError(f"only maxval 255 is supported, got {maxval}")
    raster = data[pos:]
    if len(raster) != width * height:
        raise FieldFormatError(f"PGM raster has {len(raster)} bytes, expected {width * height}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width) / 255.0


def _read_png(path):
    from PIL import Image

    with Image.open(path) as img:
        if img.mode in ("I", "I;16", "I;16B", "F"):
            raise FieldFormatError(f"unsupported PNG mode {img.mode}; expected 8-bit")
        arr = np.asarray(img.convert("L"), dtype=np.uint8)
    return arr / 255.0


def _read_raw(data):
    if len(data) < _RAW_HEADER.size:
        raise FieldFormatError("truncated raw-f32 header")
    magic, width, height, _ = _RAW_HEADER.unpack_from(data)
    if magic != RAW_MAGIC:
        raise FieldFormatError(f"bad raw-f32 magic {magic!r}")
    if width == 0 or height == 0:
        raise FieldFormatError(f"bad raw-f32 dimensions {width}x{height}")
    payload = data[_RAW_HEADER.size :]
    if len(payload) != 4 * width * height:
        raise FieldFormatError(
            f"raw-f32 payload has {len(payload)} bytes, expected {4 * width * height}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(height, width).astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise FieldFormatError("raw-f32 file contains non-finite values")
    return arr


def load_field(path, format=None):
    """Read a scalar field.

    8-bit PGM (P5) and PNG inputs are mapped to [0, 1] by ``value / 255``;
    color PNGs are converted to luminance. Raw-f32 files (``TWSF`` header,
    little-endian) are returned verbatim as float64.
    """
    fmt = _infer_format(path, format)
    if fmt == "png":
        return _read_png(path)
    data = Path(path).read_bytes()
    if fmt == "pgm":
        return _read_pgm(data)
    return _read_raw(data)


def to_bytes(field):
    """Clamp to [0, 1] and quantize to uint8 (``round(value * 255)``)."""
    return np.rint(np.clip(field, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_field(field, path, format=None):
    """Write a scalar field; 8-bit formats clamp to [0, 1] before quantizing."""
    field = check_field(field)
    fmt = _infer_format(path, format)
    path = Path(path)
    if fmt == "raw":
        h, w = field.shape
        payload = _RAW_HEADER.pack(RAW_MAGIC, w, h, 0) + field.astype("<f4").tobytes()
        path.write_bytes(payload)
    elif fmt == "pgm":
        h, w = field.shape
        path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + to_bytes(field).tobytes())
    else:
        from PIL import Image

        Image.fromarray(to_bytes(field)).save(path, format="PNG")
