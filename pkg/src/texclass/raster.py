"""Single-band rasters, label masks and circular neighbourhood sampling.

Images are held as 2-D numpy arrays indexed ``[y, x]`` (row-major). PGM (P5)
is the only on-disk format; raw headerless dumps can be read with
:func:`load_raw`.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import _kernels


class RasterError(ValueError):
    """Bad raster geometry or out-of-bounds access."""


class PgmError(ValueError):
    """Base class for PGM parse failures."""


class UnsupportedMagicError(PgmError):
    pass


class PgmHeaderError(PgmError):
    pass


class PgmTruncatedError(PgmError):
    pass


@dataclass(frozen=True)
class Raster:
    """Immutable single-band brightness grid (8 or 16 bit)."""

    pixels: np.ndarray
    depth: int = 8

    def __post_init__(self):
        if self.depth not in (8, 16):
            raise RasterError(f"unsupported depth {self.depth}")
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise RasterError("raster must be a non-empty 2-D array")
        if px.size and (px.min() < 0 or px.max() > (1 << self.depth) - 1):
            raise RasterError(f"pixel values exceed {self.depth}-bit range")
        px = np.array(px, dtype=np.uint8 if self.depth == 8 else np.uint16)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def maxval(self) -> int:
        return (1 << self.depth) - 1

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return self.depth == other.depth and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel class ids; 0 means unlabeled / unclassified."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise RasterError("label mask must be 2-D")
        if lab.size and (lab.min() < 0 or lab.max() > 255):
            raise RasterError("class ids must fit in 0..255")
        lab = np.array(lab, dtype=np.uint8)
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0

    def to_raster(self) -> Raster:
        return Raster(self.labels, depth=8)

    def __eq__(self, other):
        if not isinstance(other, LabelMask):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    __hash__ = None


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int

    def inside(self, width: int, height: int) -> bool:
        return (self.w > 0 and self.h > 0 and self.x >= 0 and self.y >= 0
                and self.x + self.w <= width and self.y + self.h <= height)

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)


# ---------------------------------------------------------------------------
# PGM I/O
# ---------------------------------------------------------------------------


def _read_header(data: bytes) -> tuple[bytes, list[int], int]:
    """Return (magic, [width, height, maxval], payload offset)."""
    pos = 0
    tokens: list[bytes] = []
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise PgmHeaderError("header ended before width/height/maxval")
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
        if len(tokens) == 1 and tokens[0] != b"P5":
            if tokens[0][:1] == b"P":
                raise UnsupportedMagicError(f"unsupported magic {tokens[0]!r}")
            raise PgmHeaderError(f"not a PNM file (magic {tokens[0][:8]!r})")
    if pos >= n or not data[pos:pos + 1].isspace():
        raise PgmHeaderError("missing whitespace after maxval")
    try:
        values = [int(t) for t in tokens[1:]]
    except ValueError as exc:
        raise PgmHeaderError(f"non-numeric header field: {exc}") from None
    return tokens[0], values, pos + 1


def load_pgm(path) -> Raster:
    with open(path, "rb") as fh:
        data = fh.read()
    _, (width, height, maxval), offset = _read_header(data)
    if width <= 0 or height <= 0:
        raise PgmHeaderError(f"bad dimensions {width}x{height}")
    if not 0 < maxval <= 65535:
        raise PgmHeaderError(f"maxval {maxval} outside 1..65535")
    wide = maxval > 255
    nbytes = width * height * (2 if wide else 1)
    payload = data[offset:offset + nbytes]
    if len(payload) < nbytes:
        raise PgmTruncatedError(f"expected {nbytes} payload bytes, got {len(payload)}")
    dtype = ">u2" if wide else np.uint8
    px = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    if px.max() > maxval:
        raise PgmHeaderError("sample exceeds maxval")
    return Raster(px, depth=16 if wide else 8)


def save_pgm(raster: Raster, path) -> None:
    header = f"P5\n{raster.width} {raster.height}\n{raster.maxval}\n".encode("ascii")
    body = raster.pixels.astype(">u2" if raster.depth == 16 else np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(header + body)


def load_raw(path, width: int, height: int, depth: int = 8) -> Raster:
    """Headerless grayscale; 16-bit samples are big-endian like PGM."""
    if depth not in (8, 16):
        raise RasterError(f"unsupported depth {depth}")
    dtype = ">u2" if depth == 16 else np.uint8
    nbytes = width * height * (depth // 8)
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < nbytes:
        raise PgmTruncatedError(f"expected {nbytes} bytes, got {len(data)}")
    return Raster(np.frombuffer(data[:nbytes], dtype=dtype).reshape(height, width), depth)


def load_mask(path) -> LabelMask:
    r = load_pgm(path)
    if r.depth != 8:
        raise RasterError("label masks must be 8-bit PGM")
    return LabelMask(r.pixels)


def save_mask(mask: LabelMask, path) -> None:
    save_pgm(mask.to_raster(), path)


def crop(raster: Raster, rect: Rect) -> Raster:
    if not rect.inside(raster.width, raster.height):
        raise RasterError(f"{rect} outside {raster.width}x{raster.height} raster")
    return Raster(raster.pixels[rect.slices()], raster.depth)


def read_rects(path) -> list[tuple[int, Rect]]:
    """Parse ``class_id x y w h`` lines; blank lines and ``#`` comments skipped."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ValueError(f"{os.fspath(path)}:{lineno}: expected 'class_id x y w h'")
            cid, x, y, w, h = (int(p) for p in parts)
            out.append((cid, Rect(x, y, w, h)))
    return out


def write_rects(path, rects: list[tuple[int, Rect]]) -> None:
    with open(path, "w") as fh:
        for cid, r in rects:
            fh.write(f"{cid} {r.x} {r.y} {r.w} {r.h}\n")


# ---------------------------------------------------------------------------
# Circular sampling
# ---------------------------------------------------------------------------

# (dy, dx) of the 3x3 neighbours, clockwise from the upper-left pixel.
SQUARE_8 = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))

# SQUARE_8 index of the angular sample p (angle 2*pi*p/8, clockwise from +x).
ANGULAR_TO_SQUARE_8 = tuple((p + 3) % 8 for p in range(8))

_SNAP = 1e-9


@dataclass(frozen=True)
class SamplingGeometry:
    """Per-sample integer base offsets and bilinear weights.

    ``weights[p]`` holds the weights of pixels (y0,x0), (y0,x0+1),
    (y0+1,x0), (y0+1,x0+1); exact integer positions have weights (1,0,0,0).
    """

    P: int
    R: float
    dy: np.ndarray
    dx: np.ndarray
    weights: np.ndarray

    @property
    def border(self) -> int:
        return int(math.ceil(self.R))


def _snap(v: float) -> float:
    r = round(v)
    return float(r) if abs(v - r) < _SNAP else v


def _angular(P: int, R: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dy = np.empty(P, np.int64)
    dx = np.empty(P, np.int64)
    w = np.zeros((P, 4))
    for p in range(P):
        a = 2.0 * math.pi * p / P
        ox = _snap(R * math.cos(a))
        oy = _snap(R * math.sin(a))
        x0, y0 = math.floor(ox), math.floor(oy)
        fx, fy = ox - x0, oy - y0
        dy[p], dx[p] = y0, x0
        w[p] = ((1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy)
    return dy, dx, w


def geometry(P: int, R: float) -> SamplingGeometry:
    """Sampling layout for P neighbours at radius R.

    (8, 1) uses the 3x3 square neighbourhood in SQUARE_8 order; every other
    scale samples the circle at angles 2*pi*p/P starting on the +x axis and
    turning clockwise (image y axis points down).
    """
    if P < 4 or R < 1:
        raise RasterError(f"invalid scale P={P}, R={R}")
    if P == 8 and R == 1:
        dy = np.array([o[0] for o in SQUARE_8], np.int64)
        dx = np.array([o[1] for o in SQUARE_8], np.int64)
        w = np.zeros((8, 4))
        w[:, 0] = 1.0
        return SamplingGeometry(P, R, dy, dx, w)
    dy, dx, w = _angular(P, R)
    return SamplingGeometry(P, R, dy, dx, w)


def cardinal_geometry(R: float) -> SamplingGeometry:
    """Samples at distance R to the east, south, west and north (in that order)."""
    dy, dx, w = _angular(4, R)
    return SamplingGeometry(4, R, dy, dx, w)


def _check_circle(raster: Raster, cx: int, cy: int, R: float) -> None:
    b = int(math.ceil(R))
    if not (b <= cx < raster.width - b and b <= cy < raster.height - b):
        raise RasterError(f"circle of radius {R} at ({cx},{cy}) leaves the raster")


def sample_differences(raster: Raster, cx: int, cy: int, P: int, R: float) -> np.ndarray:
    """Neighbour samples minus the centre value (exact for integer offsets)."""
    _check_circle(raster, cx, cy, R)
    g = geometry(P, R)
    img = raster.pixels.astype(np.float64)
    out = np.empty(P)
    offs = np.stack([g.dy, g.dx], axis=1)[None]
    _kernels.sample_diffs(img, cy, cx, offs, g.weights[None], 0, 0, P, out)
    return out


def sample_circular(raster: Raster, cx: int, cy: int, P: int, R: float) -> np.ndarray:
    return float(raster.pixels[cy, cx]) + sample_differences(raster, cx, cy, P, R)
