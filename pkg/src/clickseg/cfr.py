"""Cascade-forward refinement inference.

The outer loop adds one user click per step and runs the segmenter on
(image, all clicks, previous refined mask); the inner loop re-feeds the
model its own output with the click set unchanged, either a fixed number of
times (CFR-n) or until the binarized output stops changing (adaptive,
A-CFR-n). StdInfer is the degenerate fixed case n = 0.

Sessions are immutable: every operation returns a new session, so a failed
segmenter call leaves the caller's state untouched. One session must not be
operated on concurrently; distinct sessions are independent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .core import (
    Click,
    ClickSequence,
    ProbabilityMap,
    RasterImage,
    binarize,
    pixel_delta,
)
from .encoding import DEFAULT_CLICK_RADIUS, assemble_model_input
from .segmenter import Segmenter

# Binarized-pixel-change threshold below which the adaptive inner loop stops.
DEFAULT_PIXEL_THRESHOLD = 20

FIXED = "fixed"
ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class CfrConfig:
    """Inner-loop policy: fixed step count or adaptive with a change threshold."""

    mode: str = FIXED
    n: int = 0
    pixel_threshold: int = DEFAULT_PIXEL_THRESHOLD

    def __post_init__(self):
        if self.mode not in (FIXED, ADAPTIVE):
            raise ValueError(f"mode must be '{FIXED}' or '{ADAPTIVE}', got {self.mode!r}")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.pixel_threshold < 0:
            raise ValueError("pixel_threshold must be >= 0")

    def label(self) -> str:
        if self.mode == FIXED:
            return "stdinfer" if self.n == 0 else f"cfr-{self.n}"
        return f"a-cfr-{self.n}"


@dataclass(frozen=True, eq=False)
class SegmentationSession:
    """Image, click history, and the chain of masks produced so far.

    ``history`` holds one (click count, coarse mask) snapshot per user click.
    """

    image: RasterImage
    clicks: ClickSequence
    current_mask: ProbabilityMap
    history: tuple[tuple[int, ProbabilityMap], ...] = ()

    def __post_init__(self):
        if (self.current_mask.height, self.current_mask.width) != (
            self.image.height,
            self.image.width,
        ):
            raise ValueError("current mask does not match image dimensions")
        if len(self.history) != len(self.clicks):
            raise ValueError("history must hold one snapshot per user click")

    @property
    def step(self) -> int:
        """Number of user clicks applied so far."""
        return len(self.clicks)

    @classmethod
    def new(cls, image: RasterImage) -> "SegmentationSession":
        return cls(
            image=image,
            clicks=ClickSequence(),
            current_mask=ProbabilityMap.zeros(image.width, image.height),
        )


def _check_bounds(session: SegmentationSession, click: Click) -> None:
    if not (0 <= click.u < session.image.width and 0 <= click.v < session.image.height):
        raise ValueError(
            f"click ({click.u}, {click.v}) outside "
            f"{session.image.width}x{session.image.height} image"
        )


def _predict(session, segmenter: Segmenter, clicks, previous, radius) -> ProbabilityMap:
    model_input = assemble_model_input(session.image, clicks, previous, radius)
    out = segmenter.predict(model_input)
    if (out.height, out.width) != (session.image.height, session.image.width):
        raise ValueError(
            f"segmenter returned {out.width}x{out.height} for a "
            f"{session.image.width}x{session.image.height} image"
        )
    return out


def coarse_step(
    session: SegmentationSession,
    segmenter: Segmenter,
    new_click: Click,
    radius: int = DEFAULT_CLICK_RADIUS,
) -> SegmentationSession:
    """Outer-loop step: append the click, segment once from the previous refined mask.

    The very first step feeds the segmenter an all-zero previous mask.
    """
    _check_bounds(session, new_click)
    clicks = session.clicks.appended(new_click)
    coarse = _predict(session, segmenter, clicks, session.current_mask, radius)
    return replace(
        session,
        clicks=clicks,
        current_mask=coarse,
        history=session.history + ((len(clicks), coarse),),
    )


def refine_fixed(
    session: SegmentationSession,
    segmenter: Segmenter,
    n: int,
    radius: int = DEFAULT_CLICK_RADIUS,
) -> SegmentationSession:
    """Exactly n inner refinement calls; clicks are never touched."""
    if len(session.clicks) < 1:
        raise ValueError("refinement requires at least one click")
    if n < 0:
        raise ValueError("n must be >= 0")
    current = session.current_mask
    for _ in range(n):
        current = _predict(session, segmenter, session.clicks, current, radius)
    return replace(session, current_mask=current)


def refine_adaptive(
    session: SegmentationSession,
    segmenter: Segmenter,
    max_n: int,
    pixel_threshold: int = DEFAULT_PIXEL_THRESHOLD,
    radius: int = DEFAULT_CLICK_RADIUS,
) -> tuple[SegmentationSession, int]:
    """Refine until the binarized mask changes fewer than pixel_threshold pixels.

    Runs at least one inner step when max_n >= 1 (a change count needs two
    masks) and at most max_n. Returns the refined session and steps taken.
    """
    if len(session.clicks) < 1:
        raise ValueError("refinement requires at least one click")
    current = session.current_mask
    steps = 0
    for _ in range(max_n):
        refined = _predict(session, segmenter, session.clicks, current, radius)
        steps += 1
        delta = pixel_delta(binarize(refined), binarize(current))
        current = refined
        if delta < pixel_threshold:
            break
    return replace(session, current_mask=current), steps


def interact(
    session: SegmentationSession,
    segmenter: Segmenter,
    click: Click,
    cfg: CfrConfig,
    radius: int = DEFAULT_CLICK_RADIUS,
) -> tuple[SegmentationSession, int]:
    """One full user interaction: coarse step plus the configured refinement.

    Returns the updated session and the number of inner steps taken. This is
    the single entry point used by the benchmark, the HTTP service, and the
    one-shot CLI path.
    """
    session = coarse_step(session, segmenter, click, radius)
    if cfg.mode == FIXED:
        if cfg.n == 0:
            return session, 0
        return refine_fixed(session, segmenter, cfg.n, radius), cfg.n
    return refine_adaptive(session, segmenter, cfg.n, cfg.pixel_threshold, radius)


def undo(
    session: SegmentationSession,
    segmenter: Segmenter,
    cfg: CfrConfig,
    radius: int = DEFAULT_CLICK_RADIUS,
) -> tuple[SegmentationSession, int]:
    """Drop the last click and replay the rest from scratch.

    The mask chain makes session state path-dependent, so undo replays every
    remaining click through ``interact`` from the zero mask; determinism of
    the segmenter makes the result identical to never having clicked last.
    Returns the replayed session and the inner steps of the final replayed
    click (0 when no clicks remain).
    """
    if session.step < 1:
        raise ValueError("cannot undo: session has no clicks")
    replayed = SegmentationSession.new(session.image)
    inner_steps = 0
    for click in session.clicks[:-1]:
        replayed, inner_steps = interact(replayed, segmenter, click, cfg, radius)
    return replayed, inner_steps
