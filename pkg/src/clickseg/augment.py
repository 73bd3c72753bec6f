"""SUEM copy-paste augmentation and the standard geometric/photometric stack.

Four modes build new training pairs from a *source* sample (the object being
learned) and an *extra* sample drawn from the rest of the dataset:

* simple    — the source object is pasted into the extra image; its pasted
              mask is the new ground truth.
* union     — the extra object is pasted into the source image; ground truth
              is the union of both masks (compound targets).
* exclusion — the extra object is pasted over the source image as an
              occluder; ground truth is the source mask minus the occluder.
* mixing    — the two images are alpha-blended; the source mask is kept.

All geometry is nearest-neighbor and image and masks share the exact same
index maps, so masks stay binary and pixel correspondence is exact. Every
operation is pure given its RNG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, RasterImage

MODE_SIMPLE = "simple"
MODE_UNION = "union"
MODE_EXCLUSION = "exclusion"
MODE_MIXING = "mixing"
MODES = (MODE_SIMPLE, MODE_UNION, MODE_EXCLUSION, MODE_MIXING)

_PLACEMENT_TRIES = 5


@dataclass(frozen=True, eq=False)
class AnnotatedSample:
    """An image with per-instance masks; ``selected`` marks the source object."""

    image: RasterImage
    instances: tuple[BinaryMask, ...]
    selected: int = 0

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        if not self.instances:
            raise ValueError("sample needs at least one instance mask")
        if not 0 <= self.selected < len(self.instances):
            raise ValueError(f"selected index {self.selected} out of range")
        for m in self.instances:
            if (m.height, m.width) != (self.image.height, self.image.width):
                raise ValueError("instance mask does not match image dimensions")

    @property
    def gt(self) -> BinaryMask:
        return self.instances[self.selected]


@dataclass(frozen=True)
class SuemConfig:
    """Mode mixture, placement jitter, and standard-stack knobs."""

    mode_probs: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    apply_prob: float = 0.5
    scale_range: tuple[float, float] = (0.5, 1.5)
    mixing_alpha: float = 0.5
    min_residual_fraction: float = 0.2
    seed: int = 0
    train_size: tuple[int, int] = (448, 448)  # (width, height)
    flip_prob: float = 0.5
    max_rotation_deg: float = 20.0
    photometric_jitter: float = 0.2
    crop_fraction_range: tuple[float, float] = (0.7, 1.0)

    def __post_init__(self):
        if len(self.mode_probs) != 4 or any(p < 0 for p in self.mode_probs):
            raise ValueError("mode_probs must be four non-negative values")
        if abs(sum(self.mode_probs) - 1.0) > 1e-9:
            raise ValueError("mode_probs must sum to 1")
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ValueError("apply_prob must lie in [0, 1]")
        # 1.0 is allowed so the identity blend stays expressible
        if not 0.0 < self.mixing_alpha <= 1.0:
            raise ValueError("mixing_alpha must lie in (0, 1]")
        if self.scale_range[0] <= 0 or self.scale_range[0] > self.scale_range[1]:
            raise ValueError("scale_range must be positive and ordered")
        if not 0.0 <= self.min_residual_fraction < 1.0:
            raise ValueError("min_residual_fraction must lie in [0, 1)")
        if self.train_size[0] < 1 or self.train_size[1] < 1:
            raise ValueError("train_size must be positive")


# ---------------------------------------------------------------------------
# nearest-neighbor geometry shared by image and masks


def _nn_resize_maps(in_h: int, in_w: int, out_h: int, out_w: int):
    rows = np.clip(((np.arange(out_h) + 0.5) * in_h / out_h).astype(int), 0, in_h - 1)
    cols = np.clip(((np.arange(out_w) + 0.5) * in_w / out_w).astype(int), 0, in_w - 1)
    return rows, cols


def _nn_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    rows, cols = _nn_resize_maps(arr.shape[0], arr.shape[1], out_h, out_w)
    return arr[rows][:, cols]


def _rotation_maps(h: int, w: int, angle_deg: float):
    """Inverse-map a rotation about the pixel-center of the image."""
    theta = math.radians(angle_deg)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w]
    dx, dy = xs - cx, ys - cy
    src_x = np.rint(math.cos(theta) * dx + math.sin(theta) * dy + cx).astype(int)
    src_y = np.rint(-math.sin(theta) * dx + math.cos(theta) * dy + cy).astype(int)
    valid = (0 <= src_x) & (src_x < w) & (0 <= src_y) & (src_y < h)
    return src_y, src_x, valid


def _apply_rotation(arr: np.ndarray, maps, fill) -> np.ndarray:
    src_y, src_x, valid = maps
    out = np.full_like(arr, fill)
    out[valid] = arr[src_y[valid], src_x[valid]]
    return out


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


# ---------------------------------------------------------------------------
# paste machinery


def _object_patch(sample: AnnotatedSample) -> tuple[np.ndarray, np.ndarray]:
    """Crop the selected object's bounding box: (rgb patch, bool mask patch)."""
    bits = sample.gt.bits
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    r0, r1 = rows[0], rows[-1] + 1
    c0, c1 = cols[0], cols[-1] + 1
    return sample.image.pixels[r0:r1, c0:c1].copy(), bits[r0:r1, c0:c1].copy()


def _scale_patch(patch: np.ndarray, mask: np.ndarray, scale: float):
    out_h = max(1, int(round(mask.shape[0] * scale)))
    out_w = max(1, int(round(mask.shape[1] * scale)))
    return _nn_resize(patch, out_h, out_w), _nn_resize(mask, out_h, out_w)


def _paste(
    target: np.ndarray, patch: np.ndarray, mask: np.ndarray, x0: int, y0: int
) -> np.ndarray:
    """Draw masked patch pixels onto target (in place); return the pasted full mask."""
    th, tw = target.shape[:2]
    ph, pw = mask.shape
    tx0, ty0 = max(0, x0), max(0, y0)
    tx1, ty1 = min(tw, x0 + pw), min(th, y0 + ph)
    pasted = np.zeros((th, tw), dtype=bool)
    if tx0 >= tx1 or ty0 >= ty1:
        return pasted
    sub_mask = mask[ty0 - y0 : ty1 - y0, tx0 - x0 : tx1 - x0]
    target[ty0:ty1, tx0:tx1][sub_mask] = patch[
        ty0 - y0 : ty1 - y0, tx0 - x0 : tx1 - x0
    ][sub_mask]
    pasted[ty0:ty1, tx0:tx1] = sub_mask
    return pasted


def _draw_offset(rng, target_w, target_h, patch_w, patch_h) -> tuple[int, int]:
    # Uniform placement constrained only by "bounding-box center inside the
    # target"; clipping at the border is allowed.
    cx = int(rng.integers(0, target_w))
    cy = int(rng.integers(0, target_h))
    return cx - patch_w // 2, cy - patch_h // 2


# ---------------------------------------------------------------------------
# the four modes; each returns (sample, provenance)


def simple_cp(
    source: AnnotatedSample,
    extra: AnnotatedSample,
    rng: np.random.Generator,
    cfg: SuemConfig,
) -> tuple[AnnotatedSample, dict]:
    """Paste the source object into the extra image; its mask is the ground truth."""
    patch, mask = _object_patch(source)
    scale = float(rng.uniform(*cfg.scale_range))
    patch, mask = _scale_patch(patch, mask, scale)
    for _ in range(_PLACEMENT_TRIES):
        x0, y0 = _draw_offset(rng, extra.image.width, extra.image.height,
                              mask.shape[1], mask.shape[0])
        canvas = extra.image.pixels.copy()
        pasted = _paste(canvas, patch, mask, x0, y0)
        if pasted.any():
            sample = AnnotatedSample(RasterImage(canvas), (BinaryMask(pasted),), 0)
            return sample, {"mode": MODE_SIMPLE, "scale": scale, "offset": [x0, y0]}
    return source, {"mode": MODE_SIMPLE, "scale": scale, "fallback": "unplaceable"}


def union_cp(
    source: AnnotatedSample,
    extra: AnnotatedSample,
    rng: np.random.Generator,
    cfg: SuemConfig,
) -> tuple[AnnotatedSample, dict]:
    """Paste the extra object into the source image; ground truth is the mask union."""
    patch, mask = _object_patch(extra)
    scale = float(rng.uniform(*cfg.scale_range))
    patch, mask = _scale_patch(patch, mask, scale)
    canvas = source.image.pixels.copy()
    pasted = np.zeros_like(source.gt.bits)
    offset = None
    for _ in range(_PLACEMENT_TRIES):
        x0, y0 = _draw_offset(rng, source.image.width, source.image.height,
                              mask.shape[1], mask.shape[0])
        pasted = _paste(canvas, patch, mask, x0, y0)
        if pasted.any():
            offset = [x0, y0]
            break
    gt = BinaryMask(source.gt.bits | pasted)
    sample = AnnotatedSample(RasterImage(canvas), (gt,), 0)
    return sample, {"mode": MODE_UNION, "scale": scale, "offset": offset}


def exclusion_cp(
    source: AnnotatedSample,
    extra: AnnotatedSample,
    rng: np.random.Generator,
    cfg: SuemConfig,
) -> tuple[AnnotatedSample, dict]:
    """Occlude the source object with the extra object; ground truth excludes it.

    If the occluder repeatedly wipes out more than (1 - min_residual_fraction)
    of the source mask, falls back to the simple mode so the ground truth
    never degenerates to (near) empty.
    """
    patch, mask = _object_patch(extra)
    scale = float(rng.uniform(*cfg.scale_range))
    patch, mask = _scale_patch(patch, mask, scale)
    floor = cfg.min_residual_fraction * source.gt.area
    for _ in range(_PLACEMENT_TRIES):
        x0, y0 = _draw_offset(rng, source.image.width, source.image.height,
                              mask.shape[1], mask.shape[0])
        canvas = source.image.pixels.copy()
        pasted = _paste(canvas, patch, mask, x0, y0)
        residual = source.gt.bits & ~pasted
        if int(residual.sum()) >= floor and residual.any():
            sample = AnnotatedSample(RasterImage(canvas), (BinaryMask(residual),), 0)
            return sample, {"mode": MODE_EXCLUSION, "scale": scale, "offset": [x0, y0]}
    fallback, prov = simple_cp(source, extra, rng, cfg)
    return fallback, {"mode": MODE_EXCLUSION, "fallback": prov}


def image_mixing(
    source: AnnotatedSample,
    extra: AnnotatedSample,
    rng: np.random.Generator,
    cfg: SuemConfig,
) -> tuple[AnnotatedSample, dict]:
    """Alpha-blend the extra image under the source; masks are untouched."""
    ext = _nn_resize(extra.image.pixels, source.image.height, source.image.width)
    alpha = cfg.mixing_alpha
    blended = _round_half_up(
        alpha * source.image.pixels.astype(np.float64)
        + (1.0 - alpha) * ext.astype(np.float64)
    )
    sample = AnnotatedSample(
        RasterImage(np.clip(blended, 0, 255).astype(np.uint8)),
        source.instances,
        source.selected,
    )
    return sample, {"mode": MODE_MIXING, "alpha": alpha}


_MODE_FNS = {
    MODE_SIMPLE: simple_cp,
    MODE_UNION: union_cp,
    MODE_EXCLUSION: exclusion_cp,
    MODE_MIXING: image_mixing,
}


# ---------------------------------------------------------------------------
# standard augmentation stack


def standard_augment(
    sample: AnnotatedSample, rng: np.random.Generator, cfg: SuemConfig
) -> tuple[AnnotatedSample, dict]:
    """Flip / rotate / photometric jitter / random crop, resized to train size.

    Geometric steps use one shared index map for the image and every mask.
    """
    img = sample.image.pixels
    masks = [m.bits for m in sample.instances]
    prov: dict = {}

    if rng.random() < cfg.flip_prob:
        img = img[:, ::-1]
        masks = [m[:, ::-1] for m in masks]
        prov["flip"] = True

    angle = float(rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg))
    maps = _rotation_maps(img.shape[0], img.shape[1], angle)
    img = _apply_rotation(img, maps, 0)
    masks = [_apply_rotation(m, maps, False) for m in masks]
    prov["rotation_deg"] = angle

    j = cfg.photometric_jitter
    contrast = float(rng.uniform(1.0 - j, 1.0 + j))
    brightness = float(rng.uniform(1.0 - j, 1.0 + j))
    shifted = ((img.astype(np.float64) - 128.0) * contrast + 128.0) * brightness
    img = np.clip(_round_half_up(shifted), 0, 255).astype(np.uint8)
    prov["contrast"] = contrast
    prov["brightness"] = brightness

    h, w = img.shape[:2]
    wf = float(rng.uniform(*cfg.crop_fraction_range))
    hf = float(rng.uniform(*cfg.crop_fraction_range))
    cw, ch = max(1, int(round(w * wf))), max(1, int(round(h * hf)))
    x0 = int(rng.integers(0, w - cw + 1))
    y0 = int(rng.integers(0, h - ch + 1))
    img = img[y0 : y0 + ch, x0 : x0 + cw]
    masks = [m[y0 : y0 + ch, x0 : x0 + cw] for m in masks]
    prov["crop"] = [x0, y0, cw, ch]

    out_w, out_h = cfg.train_size
    img = _nn_resize(img, out_h, out_w)
    masks = [_nn_resize(m, out_h, out_w) for m in masks]

    out = AnnotatedSample(
        RasterImage(img.copy()),
        tuple(BinaryMask(m) for m in masks),
        sample.selected,
    )
    return out, prov


def augment_sample(
    source: AnnotatedSample,
    sample_extra,
    rng: np.random.Generator,
    cfg: SuemConfig,
) -> tuple[AnnotatedSample, dict]:
    """One draw of the full pipeline: maybe a copy-paste mode, then the standard stack.

    ``sample_extra`` is a callable (rng) -> AnnotatedSample yielding a random
    extra sample, distinct from the source when the dataset allows it.
    Output size is always cfg.train_size.
    """
    prov: dict = {"mode": "none"}
    sample = source
    if rng.random() < cfg.apply_prob:
        mode = MODES[int(rng.choice(4, p=cfg.mode_probs))]
        extra = sample_extra(rng)
        sample, prov = _MODE_FNS[mode](source, extra, rng, cfg)
    sample, std_prov = standard_augment(sample, rng, cfg)
    prov["standard"] = std_prov
    return sample, prov


def make_extra_sampler(dataset: list[AnnotatedSample], source_index: int):
    """Uniform sampler over the other samples; falls back to the source itself
    for a single-sample dataset."""
    others = [i for i in range(len(dataset)) if i != source_index]
    if not others:
        others = [source_index]

    def sampler(rng: np.random.Generator) -> AnnotatedSample:
        return dataset[others[int(rng.integers(len(others)))]]

    return sampler
