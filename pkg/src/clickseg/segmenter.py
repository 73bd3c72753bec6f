"""The pluggable segmentation function and its desk-scale implementations.

A segmenter maps (image, click maps, previous mask) to a probability map of
the same size. Three implementations live here or nearby:

* ``ToySegmenter`` — a per-pixel logistic model over 8 fixed features, small
  enough to train on a laptop and to differentiate by hand.
* ``ScriptedMockSegmenter`` — returns a queued list of maps and logs every
  call; the instrument behind the refinement-loop structure tests.
* ``ExternalSegmenter`` (see ``external.py``) — drives a third-party model in
  a child process over a line-delimited JSON protocol.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.special import expit

from .core import ProbabilityMap
from .encoding import ModelInput


@runtime_checkable
class Segmenter(Protocol):
    """Behavioral contract: dimension-preserving, output values in [0, 1]."""

    def predict(self, model_input: ModelInput) -> ProbabilityMap: ...


# Feature channels of the toy model, in weight order.
FEATURE_NAMES = (
    "bias",
    "gray",
    "gray_blur3",
    "pos_disk",
    "neg_disk",
    "prev_mask",
    "pos_proximity",
    "neg_proximity",
)
N_FEATURES = len(FEATURE_NAMES)

DEFAULT_PROXIMITY_SIGMA = 10.0


@dataclass(frozen=True)
class ToyModelParams:
    """One weight per feature channel plus the proximity length scale."""

    weights: np.ndarray
    sigma: float = DEFAULT_PROXIMITY_SIGMA

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1).copy()
        if w.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} weights, got {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, sigma: float = DEFAULT_PROXIMITY_SIGMA) -> "ToyModelParams":
        return cls(np.zeros(N_FEATURES), sigma=sigma)

    def replace_weights(self, weights: np.ndarray) -> "ToyModelParams":
        return ToyModelParams(weights, sigma=self.sigma)


def _min_click_distance(clicks, width: int, height: int) -> np.ndarray | None:
    """Euclidean distance from every pixel to the nearest click, or None if no clicks."""
    if not clicks:
        return None
    ys, xs = np.mgrid[0:height, 0:width]
    dist = np.full((height, width), np.inf)
    for c in clicks:
        d = np.sqrt((xs - c.u) ** 2.0 + (ys - c.v) ** 2.0)
        np.minimum(dist, d, out=dist)
    return dist


def toy_features(model_input: ModelInput, sigma: float) -> np.ndarray:
    """Stack the 8 per-pixel feature planes, shape (8, h, w).

    The proximity features decay as exp(-d/sigma) from the nearest click of
    the matching label and are 0 when that label has no clicks yet, keeping
    the no-click forward well defined.
    """
    h, w = model_input.height, model_input.width
    gray = model_input.image.pixels.astype(np.float64).sum(axis=2) / (3.0 * 255.0)
    feats = np.empty((N_FEATURES, h, w), dtype=np.float64)
    feats[0] = 1.0
    feats[1] = gray
    feats[2] = uniform_filter(gray, size=3, mode="nearest")
    feats[3] = model_input.click_maps.positive.values
    feats[4] = model_input.click_maps.negative.values
    feats[5] = model_input.previous_mask.values

    d_pos = _min_click_distance(model_input.clicks.positive(), w, h)
    d_neg = _min_click_distance(model_input.clicks.negative(), w, h)
    feats[6] = 0.0 if d_pos is None else np.exp(-d_pos / sigma)
    feats[7] = 0.0 if d_neg is None else np.exp(-d_neg / sigma)
    return feats


class ToyForwardCache:
    """Everything the backward pass needs: feature planes and output probabilities."""

    __slots__ = ("features", "probs")

    def __init__(self, features: np.ndarray, probs: np.ndarray):
        self.features = features
        self.probs = probs


def toy_forward(
    params: ToyModelParams, model_input: ModelInput
) -> tuple[ProbabilityMap, ToyForwardCache]:
    """Per-pixel logistic over the 8 feature channels."""
    feats = toy_features(model_input, params.sigma)
    logits = np.tensordot(params.weights, feats, axes=1)
    probs = expit(logits)
    return ProbabilityMap(probs), ToyForwardCache(feats, probs)


def toy_backward(
    params: ToyModelParams, cache: ToyForwardCache, upstream: np.ndarray
) -> np.ndarray:
    """Gradient of sum(upstream * output) with respect to the 8 weights."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != cache.probs.shape:
        raise ValueError(
            f"upstream gradient shape {upstream.shape} != output {cache.probs.shape}"
        )
    local = upstream * cache.probs * (1.0 - cache.probs)
    return np.tensordot(cache.features, local, axes=([1, 2], [0, 1]))


class ToySegmenter:
    """Segmenter wrapper around fixed toy-model parameters."""

    def __init__(self, params: ToyModelParams):
        self.params = params

    def predict(self, model_input: ModelInput) -> ProbabilityMap:
        prob, _ = toy_forward(self.params, model_input)
        return prob

    def forward_with_cache(
        self, model_input: ModelInput
    ) -> tuple[ProbabilityMap, ToyForwardCache]:
        return toy_forward(self.params, model_input)


class MockExhaustedError(RuntimeError):
    """The scripted mock ran out of queued responses."""


class ScriptedMockSegmenter:
    """Returns queued probability maps in order and records every input it saw."""

    def __init__(self, responses):
        self._queue: list[ProbabilityMap] = list(responses)
        self.calls: list[ModelInput] = []

    def predict(self, model_input: ModelInput) -> ProbabilityMap:
        self.calls.append(model_input)
        if not self._queue:
            raise MockExhaustedError(
                f"mock exhausted after {len(self.calls) - 1} responses"
            )
        return self._queue.pop(0)

    @property
    def remaining(self) -> int:
        return len(self._queue)


# ---------------------------------------------------------------------------
# parameter persistence: magic "CSTM1", count u32 LE, weights f64 LE

PARAMS_MAGIC = b"CSTM1"


def params_to_bytes(params: ToyModelParams) -> bytes:
    return (
        PARAMS_MAGIC
        + struct.pack("<I", len(params.weights))
        + params.weights.astype("<f8").tobytes()
    )


def params_from_bytes(
    data: bytes, sigma: float = DEFAULT_PROXIMITY_SIGMA
) -> ToyModelParams:
    if len(data) < len(PARAMS_MAGIC) + 4:
        raise ValueError("parameter data truncated before header end")
    if data[: len(PARAMS_MAGIC)] != PARAMS_MAGIC:
        raise ValueError(f"bad parameter magic {data[:len(PARAMS_MAGIC)]!r}")
    (count,) = struct.unpack_from("<I", data, len(PARAMS_MAGIC))
    expected = len(PARAMS_MAGIC) + 4 + 8 * count
    if len(data) != expected:
        raise ValueError(f"parameter payload is {len(data)} bytes, expected {expected}")
    weights = np.frombuffer(data, dtype="<f8", offset=len(PARAMS_MAGIC) + 4)
    return ToyModelParams(weights, sigma=sigma)


def save_params(params: ToyModelParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(params_to_bytes(params))


def load_params(path, sigma: float = DEFAULT_PROXIMITY_SIGMA) -> ToyModelParams:
    with open(path, "rb") as fh:
        return params_from_bytes(fh.read(), sigma=sigma)
