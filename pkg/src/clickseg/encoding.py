"""Click encoding: turn a click sequence into the disk maps the segmenter consumes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ClickSequence,
    DimensionMismatchError,
    ProbabilityMap,
    RasterImage,
)

# Disk radius used throughout unless overridden; small enough that 64x64 toy
# runs may prefer 3.
DEFAULT_CLICK_RADIUS = 5


@dataclass(frozen=True, eq=False)
class ClickMaps:
    """Binary-valued disk maps, one per click label."""

    positive: ProbabilityMap
    negative: ProbabilityMap

    def __post_init__(self):
        if (self.positive.height, self.positive.width) != (
            self.negative.height,
            self.negative.width,
        ):
            raise DimensionMismatchError("positive/negative map sizes differ")
        for m in (self.positive, self.negative):
            vals = m.values
            if not np.isin(vals, (0.0, 1.0)).all():
                raise ValueError("click maps must be binary-valued")


@dataclass(frozen=True, eq=False)
class ModelInput:
    """The argument triple a segmenter sees: image, encoded clicks, previous mask.

    The raw click sequence rides along for in-process consumers (the toy
    model's proximity features, the mock's call log); the external wire
    protocol transmits only the maps.
    """

    image: RasterImage
    click_maps: ClickMaps
    previous_mask: ProbabilityMap
    clicks: ClickSequence = ClickSequence()

    def __post_init__(self):
        dims = (self.image.height, self.image.width)
        if (self.click_maps.positive.height, self.click_maps.positive.width) != dims:
            raise DimensionMismatchError("click maps do not match image size")
        if (self.previous_mask.height, self.previous_mask.width) != dims:
            raise DimensionMismatchError("previous mask does not match image size")

    @property
    def width(self) -> int:
        return self.image.width

    @property
    def height(self) -> int:
        return self.image.height


def _stamp_disk(grid: np.ndarray, u: int, v: int, radius: int) -> None:
    h, w = grid.shape
    x0, x1 = max(0, u - radius), min(w - 1, u + radius)
    y0, y1 = max(0, v - radius), min(h - 1, v + radius)
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    inside = (xs - u) ** 2 + (ys - v) ** 2 <= radius * radius
    grid[y0 : y1 + 1, x0 : x1 + 1][inside] = 1.0


def encode_click_maps(
    clicks: ClickSequence,
    width: int,
    height: int,
    radius: int = DEFAULT_CLICK_RADIUS,
) -> ClickMaps:
    """Stamp a filled disk of the given radius around each click.

    Disks clip at the image border; overlapping same-label disks simply union,
    so the encoding is invariant to click order within a label.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    pos = np.zeros((height, width), dtype=np.float64)
    neg = np.zeros((height, width), dtype=np.float64)
    for c in clicks:
        if not (0 <= c.u < width and 0 <= c.v < height):
            raise ValueError(
                f"click ({c.u}, {c.v}) outside {width}x{height} image bounds"
            )
        _stamp_disk(pos if c.label == 1 else neg, c.u, c.v, radius)
    return ClickMaps(ProbabilityMap(pos), ProbabilityMap(neg))


def assemble_model_input(
    image: RasterImage,
    clicks: ClickSequence,
    previous: ProbabilityMap,
    radius: int = DEFAULT_CLICK_RADIUS,
) -> ModelInput:
    """Package the segmenter's inputs; the previous mask passes through unchanged."""
    if (previous.height, previous.width) != (image.height, image.width):
        raise DimensionMismatchError("previous mask does not match image size")
    maps = encode_click_maps(clicks, image.width, image.height, radius)
    return ModelInput(
        image=image, click_maps=maps, previous_mask=previous, clicks=clicks
    )
