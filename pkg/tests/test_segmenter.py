import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clickseg.core import (
    Click,
    ClickSequence,
    ProbabilityMap,
    RasterImage,
)
from clickseg.encoding import assemble_model_input
from clickseg.segmenter import (
    MockExhaustedError,
    N_FEATURES,
    ScriptedMockSegmenter,
    ToyModelParams,
    ToySegmenter,
    params_from_bytes,
    params_to_bytes,
    toy_backward,
    toy_features,
    toy_forward,
)


def model_input(width=8, height=8, clicks=(), prev=None, seed=0, radius=2):
    rng = np.random.default_rng(seed)
    img = RasterImage(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))
    prev = prev if prev is not None else ProbabilityMap.zeros(width, height)
    return assemble_model_input(img, ClickSequence(tuple(clicks)), prev, radius)


def logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def test_zero_weights_give_uniform_half():
    prob, _ = toy_forward(ToyModelParams.zeros(), model_input())
    assert (prob.values == 0.5).all()


def test_large_bias_saturates_high():
    w = np.zeros(N_FEATURES)
    w[0] = 10.0
    prob, _ = toy_forward(ToyModelParams(w), model_input())
    assert (prob.values > 0.9999).all()


def test_positive_disk_weight_splits_inside_outside():
    w = np.zeros(N_FEATURES)
    w[3] = 5.0  # positive disk channel
    mi = model_input(11, 11, clicks=(Click(5, 5, 1),), radius=2)
    prob, _ = toy_forward(ToyModelParams(w), mi)
    inside = mi.click_maps.positive.values == 1.0
    assert np.allclose(prob.values[inside], logistic(5.0))
    assert np.allclose(prob.values[~inside], 0.5)


def test_missing_click_distance_features_are_zero():
    feats = toy_features(model_input(clicks=()), sigma=10.0)
    assert (feats[6] == 0).all() and (feats[7] == 0).all()
    feats2 = toy_features(model_input(clicks=(Click(1, 1, 1),)), sigma=10.0)
    assert feats2[6].max() == 1.0  # exp(0) at the click itself
    assert (feats2[7] == 0).all()


def test_backward_zero_upstream_is_zero():
    params = ToyModelParams(np.linspace(-1, 1, N_FEATURES))
    _, cache = toy_forward(params, model_input())
    assert (toy_backward(params, cache, np.zeros((8, 8))) == 0).all()


def test_backward_single_pixel_hand_algebra():
    rng = np.random.default_rng(5)
    params = ToyModelParams(rng.normal(0, 1, N_FEATURES))
    mi = model_input(1, 1, clicks=(Click(0, 0, 1),), radius=0)
    prob, cache = toy_forward(params, mi)
    g = 0.7
    grad = toy_backward(params, cache, np.array([[g]]))
    p = prob.values[0, 0]
    expected = g * p * (1 - p) * cache.features[:, 0, 0]
    assert np.allclose(grad, expected, rtol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    weights = rng.normal(0, 1, N_FEATURES)
    mi = model_input(
        8, 8, clicks=(Click(2, 2, 1), Click(6, 5, 0)),
        prev=ProbabilityMap(np.random.default_rng(seed + 99).random((8, 8))),
        seed=seed,
    )
    upstream = rng.normal(0, 1, (8, 8))
    _, cache = toy_forward(ToyModelParams(weights), mi)
    grad = toy_backward(ToyModelParams(weights), cache, upstream)
    h = 1e-4
    for k in range(N_FEATURES):
        e = np.zeros(N_FEATURES)
        e[k] = h
        plus, _ = toy_forward(ToyModelParams(weights + e), mi)
        minus, _ = toy_forward(ToyModelParams(weights - e), mi)
        fd = ((upstream * plus.values).sum() - (upstream * minus.values).sum()) / (2 * h)
        assert abs(grad[k] - fd) <= 1e-4 * max(1.0, abs(fd))


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_output_range_and_dims_for_random_inputs(seed):
    rng = np.random.default_rng(seed)
    w, h = int(rng.integers(1, 12)), int(rng.integers(1, 12))
    clicks = []
    if w > 2 and h > 2:
        clicks = [Click(1, 1, 1), Click(w - 1, h - 1, 0)]
    mi = model_input(w, h, clicks=clicks, seed=seed, radius=1)
    prob, _ = toy_forward(ToyModelParams(rng.normal(0, 3, N_FEATURES)), mi)
    assert prob.values.shape == (h, w)
    assert (prob.values >= 0).all() and (prob.values <= 1).all()


def test_prediction_invariant_to_same_label_permutation():
    rng = np.random.default_rng(1)
    params = ToyModelParams(rng.normal(0, 1, N_FEATURES))
    clicks = [Click(2, 2, 1), Click(7, 3, 1), Click(4, 9, 0), Click(9, 9, 0)]
    a = ToySegmenter(params).predict(model_input(12, 12, clicks=clicks))
    b = ToySegmenter(params).predict(
        model_input(12, 12, clicks=[clicks[1], clicks[0], clicks[3], clicks[2]])
    )
    assert np.array_equal(a.values, b.values)


# ---------------------------------------------------------------------------
# persistence


def test_params_round_trip_bit_exact():
    params = ToyModelParams(np.array([0.1, -2.5, 3e-17, 7.0, 0.0, 1.0, 2.0, 3.0]))
    back = params_from_bytes(params_to_bytes(params))
    assert np.array_equal(back.weights, params.weights)


def test_params_bad_magic():
    data = params_to_bytes(ToyModelParams.zeros())
    with pytest.raises(ValueError):
        params_from_bytes(b"XSTM1" + data[5:])


def test_params_truncation():
    data = params_to_bytes(ToyModelParams.zeros())
    with pytest.raises(ValueError):
        params_from_bytes(data[:-3])
    with pytest.raises(ValueError):
        params_from_bytes(data[:6])


def test_params_validation():
    with pytest.raises(ValueError):
        ToyModelParams(np.zeros(7))
    with pytest.raises(ValueError):
        ToyModelParams(np.full(8, np.nan))
    with pytest.raises(ValueError):
        ToyModelParams(np.zeros(8), sigma=0.0)


# ---------------------------------------------------------------------------
# scripted mock


def test_mock_returns_queue_in_order_and_logs_calls():
    maps = [ProbabilityMap.zeros(4, 4), ProbabilityMap(np.full((4, 4), 0.25))]
    mock = ScriptedMockSegmenter(maps)
    mi = model_input(4, 4)
    assert mock.predict(mi) is maps[0]
    assert mock.predict(mi) is maps[1]
    assert len(mock.calls) == 2
    assert mock.calls[0] is mi


def test_mock_raises_when_exhausted():
    mock = ScriptedMockSegmenter([])
    with pytest.raises(MockExhaustedError):
        mock.predict(model_input(4, 4))
    assert len(mock.calls) == 1  # the failing call is still logged
