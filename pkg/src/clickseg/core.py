"""Value types and pixel-level primitives shared by every other module.

Coordinate convention, used everywhere: ``u`` is the column index (x, 0-based
from the left), ``v`` is the row index (y, 0-based from the top). Arrays are
stored row-major, shape ``(height, width)``.

All types are immutable after construction (backing arrays are marked
read-only), so instances can be shared freely between threads.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from PIL import Image
from scipy import ndimage


class DimensionMismatchError(ValueError):
    """Two pixel grids that must agree in size do not."""


def _require_same_shape(a, b) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise DimensionMismatchError(
            f"shape mismatch: {a.shape[:2]} vs {b.shape[:2]}"
        )


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr).copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class RasterImage:
    """RGB pixel grid, shape (height, width, 3), dtype uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) RGB array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        if px.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {px.dtype}")
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def full(cls, width: int, height: int, rgb=(0, 0, 0)) -> "RasterImage":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:, :] = rgb
        return cls(px)


@dataclass(frozen=True, eq=False)
class ProbabilityMap:
    """Per-pixel foreground probability, shape (height, width), values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError(f"expected 2-d value grid, got shape {vals.shape}")
        if vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError("map dimensions must be positive")
        if not np.isfinite(vals).all():
            raise ValueError("probability values must be finite")
        if (vals < 0.0).any() or (vals > 1.0).any():
            raise ValueError("probability values must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, width: int, height: int) -> "ProbabilityMap":
        return cls(np.zeros((height, width), dtype=np.float64))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean foreground mask, shape (height, width)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError(f"expected 2-d bit grid, got shape {bits.shape}")
        if bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ValueError("mask dimensions must be positive")
        if bits.dtype != np.bool_:
            bits = bits != 0
        object.__setattr__(self, "bits", _frozen(bits))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    def complement(self) -> "BinaryMask":
        return BinaryMask(~self.bits)


class Click(NamedTuple):
    """A user click: column u, row v, label 1 = foreground, 0 = background."""

    u: int
    v: int
    label: int


@dataclass(frozen=True)
class ClickSequence:
    """Ordered clicks; click k is the k-th user action. Positions are unique."""

    clicks: tuple[Click, ...] = ()

    def __post_init__(self):
        clicks = tuple(Click(int(c[0]), int(c[1]), int(c[2])) for c in self.clicks)
        positions = set()
        for c in clicks:
            if c.label not in (0, 1):
                raise ValueError(f"click label must be 0 or 1, got {c.label}")
            if (c.u, c.v) in positions:
                raise ValueError(f"duplicate click position ({c.u}, {c.v})")
            positions.add((c.u, c.v))
        object.__setattr__(self, "clicks", clicks)

    def __len__(self) -> int:
        return len(self.clicks)

    def __iter__(self):
        return iter(self.clicks)

    def __getitem__(self, idx):
        return self.clicks[idx]

    def appended(self, click: Click) -> "ClickSequence":
        return ClickSequence(self.clicks + (click,))

    def positions(self) -> set[tuple[int, int]]:
        return {(c.u, c.v) for c in self.clicks}

    def positive(self) -> tuple[Click, ...]:
        return tuple(c for c in self.clicks if c.label == 1)

    def negative(self) -> tuple[Click, ...]:
        return tuple(c for c in self.clicks if c.label == 0)


# ---------------------------------------------------------------------------
# pixel-level operations


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union of two masks.

    Both-empty masks score 1.0: an instance with empty ground truth is
    trivially solved, and the convention avoids 0/0. (This corner is not
    standardized across the literature; callers comparing against other
    tools should be aware of it.)
    """
    _require_same_shape(a.bits, b.bits)
    union = int((a.bits | b.bits).sum())
    if union == 0:
        return 1.0
    inter = int((a.bits & b.bits).sum())
    return inter / union


def binarize(p: ProbabilityMap, threshold: float = 0.5) -> BinaryMask:
    """Threshold a probability map; a value equal to the threshold is foreground."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return BinaryMask(p.values >= threshold)


def pixel_delta(a: BinaryMask, b: BinaryMask) -> int:
    """Number of pixels at which the two masks differ."""
    _require_same_shape(a.bits, b.bits)
    return int((a.bits != b.bits).sum())


@dataclass(frozen=True, eq=False)
class Component:
    """One 8-connected foreground component.

    ``pixels`` is an (n, 2) array of (v, u) pairs in lexicographic order,
    so ``pixels[0]`` is the topmost-leftmost pixel.
    """

    pixels: np.ndarray
    area: int

    @property
    def top_left(self) -> tuple[int, int]:
        return int(self.pixels[0, 0]), int(self.pixels[0, 1])

    def as_mask(self, width: int, height: int) -> BinaryMask:
        bits = np.zeros((height, width), dtype=bool)
        bits[self.pixels[:, 0], self.pixels[:, 1]] = True
        return BinaryMask(bits)


_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def connected_components(m: BinaryMask) -> list[Component]:
    """Partition the foreground into 8-connected components.

    Components are ordered by area descending, ties broken by the
    topmost-leftmost pixel, so the result is deterministic.
    """
    labels, count = ndimage.label(m.bits, structure=_EIGHT_CONNECTED)
    comps = []
    for idx in range(1, count + 1):
        pixels = np.argwhere(labels == idx)  # row-major, already (v, u) sorted
        pixels.flags.writeable = False
        comps.append(Component(pixels=pixels, area=len(pixels)))
    comps.sort(key=lambda c: (-c.area, c.top_left))
    return comps


def distance_transform(m: BinaryMask) -> np.ndarray:
    """Exact Euclidean distance from each foreground pixel to the nearest background.

    Positions outside the image border count as background, so a mask filling
    the whole image still has finite distances. Background pixels map to 0.
    """
    padded = np.zeros((m.height + 2, m.width + 2), dtype=bool)
    padded[1:-1, 1:-1] = m.bits
    dist = ndimage.distance_transform_edt(padded)
    return dist[1:-1, 1:-1]


# ---------------------------------------------------------------------------
# file formats

PROB_MAP_MAGIC = b"CSPM"


def mask_to_png_bytes(m: BinaryMask) -> bytes:
    """Encode as single-channel PNG: 0 = background, 255 = foreground."""
    img = Image.fromarray(np.where(m.bits, 255, 0).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def mask_from_png_bytes(data: bytes) -> BinaryMask:
    """Decode a single-channel PNG; any nonzero sample is foreground."""
    img = Image.open(io.BytesIO(data))
    arr = np.asarray(img.convert("L"))
    return BinaryMask(arr != 0)


def save_mask_png(m: BinaryMask, path) -> None:
    with open(path, "wb") as fh:
        fh.write(mask_to_png_bytes(m))


def load_mask_png(path) -> BinaryMask:
    with open(path, "rb") as fh:
        return mask_from_png_bytes(fh.read())


def prob_map_to_bytes(p: ProbabilityMap) -> bytes:
    """Serialize: magic "CSPM", width and height as u16 LE, then f32 LE row-major."""
    if p.width > 0xFFFF or p.height > 0xFFFF:
        raise ValueError("probability map too large for the 16-bit header")
    header = PROB_MAP_MAGIC + struct.pack("<HH", p.width, p.height)
    return header + p.values.astype("<f4").tobytes()


def prob_map_from_bytes(data: bytes) -> ProbabilityMap:
    if len(data) < 8:
        raise ValueError("probability map data truncated before header end")
    if data[:4] != PROB_MAP_MAGIC:
        raise ValueError(f"bad probability map magic {data[:4]!r}")
    width, height = struct.unpack("<HH", data[4:8])
    expected = 8 + 4 * width * height
    if len(data) != expected:
        raise ValueError(
            f"probability map payload is {len(data)} bytes, expected {expected}"
        )
    vals = np.frombuffer(data, dtype="<f4", offset=8).reshape(height, width)
    return ProbabilityMap(np.clip(vals.astype(np.float64), 0.0, 1.0))


def image_to_png_bytes(img: RasterImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def image_from_bytes(data: bytes) -> RasterImage:
    """Decode PNG/JPEG bytes to an RGB raster image."""
    try:
        img = Image.open(io.BytesIO(data))
        arr = np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise ValueError(f"cannot decode image: {exc}") from exc
    return RasterImage(arr)


def load_image(path) -> RasterImage:
    with open(path, "rb") as fh:
        return image_from_bytes(fh.read())
