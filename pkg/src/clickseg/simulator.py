"""Automatic click generation.

Training uses stochastic clicks (random initial sets, corrective clicks
sampled uniformly from the larger error region); evaluation uses a fully
deterministic rule (largest error component, click at its distance-transform
argmax) so benchmark numbers are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    BinaryMask,
    Click,
    ClickSequence,
    Component,
    connected_components,
    distance_transform,
)


class EmptyForegroundError(ValueError):
    """The ground truth has no foreground pixel to sample from."""


@dataclass(frozen=True)
class SimulatorConfig:
    """Ranges for the initial random click set."""

    min_pos: int = 1
    max_pos: int = 5
    min_neg: int = 0
    max_neg: int = 5
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.min_pos <= self.max_pos):
            raise ValueError("need 1 <= min_pos <= max_pos")
        if not (0 <= self.min_neg <= self.max_neg):
            raise ValueError("need 0 <= min_neg <= max_neg")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent deterministic stream for (seed, *stream)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(stream)))


def sample_initial_clicks(
    gt: BinaryMask, rng: np.random.Generator, cfg: SimulatorConfig
) -> ClickSequence:
    """Uniform positives from the foreground, uniform negatives from the background.

    Counts are drawn uniformly from the configured ranges, then capped at the
    number of available pixels; positions never repeat. An all-foreground
    ground truth forces the negative count to zero.
    """
    fg = np.argwhere(gt.bits)
    if len(fg) == 0:
        raise EmptyForegroundError("ground truth has no foreground pixels")
    bg = np.argwhere(~gt.bits)

    k_pos = int(rng.integers(cfg.min_pos, cfg.max_pos + 1))
    k_pos = min(k_pos, len(fg))
    k_neg = int(rng.integers(cfg.min_neg, cfg.max_neg + 1)) if len(bg) else 0
    k_neg = min(k_neg, len(bg))

    clicks = []
    for (pool, k, label) in ((fg, k_pos, 1), (bg, k_neg, 0)):
        if k == 0:
            continue
        chosen = rng.choice(len(pool), size=k, replace=False)
        clicks.extend(Click(int(pool[i][1]), int(pool[i][0]), label) for i in chosen)
    return ClickSequence(tuple(clicks))


def _uniform_pick(
    region: np.ndarray, taken: set[tuple[int, int]], rng: np.random.Generator
) -> tuple[int, int] | None:
    coords = np.argwhere(region)
    if taken:
        keep = [i for i, (v, u) in enumerate(coords) if (int(u), int(v)) not in taken]
        coords = coords[keep]
    if len(coords) == 0:
        return None
    v, u = coords[rng.integers(len(coords))]
    return int(u), int(v)


def next_training_click(
    gt: BinaryMask,
    pred: BinaryMask,
    existing: ClickSequence,
    rng: np.random.Generator,
) -> Click | None:
    """One corrective click, sampled uniformly from the larger error region.

    Picks the false-negative or false-positive region by total area (ties go
    to false-negative), excludes already-clicked positions, and labels the
    click after the region it lands in. Returns None once prediction and
    ground truth agree (converged).
    """
    if gt.bits.shape != pred.bits.shape:
        raise ValueError("prediction and ground truth sizes differ")
    fn = gt.bits & ~pred.bits
    fp = pred.bits & ~gt.bits
    if not fn.any() and not fp.any():
        return None
    taken = existing.positions()
    first, second = ((fn, 1), (fp, 0)) if fn.sum() >= fp.sum() else ((fp, 0), (fn, 1))
    for region, label in (first, second):
        pick = _uniform_pick(region, taken, rng)
        if pick is not None:
            return Click(pick[0], pick[1], label)
    return None


def _component_order_key(comp: Component, is_fn: bool):
    return (-comp.area, 0 if is_fn else 1, comp.top_left)


def next_eval_click(
    gt: BinaryMask, pred: BinaryMask, existing: ClickSequence
) -> Click | None:
    """Deterministic benchmark click.

    Takes the largest 8-connected error component (ties: false-negative over
    false-positive, then topmost-leftmost pixel) and clicks the point of that
    component farthest from its boundary — the argmax of the component's
    Euclidean distance transform, ties again topmost-leftmost. Positions
    already clicked are skipped so a click sequence never repeats a point.
    """
    if gt.bits.shape != pred.bits.shape:
        raise ValueError("prediction and ground truth sizes differ")
    fn = BinaryMask(gt.bits & ~pred.bits)
    fp = BinaryMask(pred.bits & ~gt.bits)

    candidates = [(c, True) for c in connected_components(fn)]
    candidates += [(c, False) for c in connected_components(fp)]
    candidates.sort(key=lambda item: _component_order_key(item[0], item[1]))

    taken = existing.positions()
    for comp, is_fn in candidates:
        dist = distance_transform(comp.as_mask(gt.width, gt.height))
        best = None
        for v, u in comp.pixels:
            if (int(u), int(v)) in taken:
                continue
            key = (-dist[v, u], v, u)
            if best is None or key < best[0]:
                best = (key, Click(int(u), int(v), 1 if is_fn else 0))
        if best is not None:
            return best[1]
    return None
