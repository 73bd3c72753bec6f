import sys

import numpy as np
import pytest

from clickseg.core import Click, ClickSequence, ProbabilityMap, RasterImage
from clickseg.encoding import assemble_model_input
from clickseg.external import (
    ExternalProcessExit,
    ExternalProtocolError,
    ExternalSegmenter,
    ExternalTimeout,
)
from clickseg.segmenter import ToyModelParams, ToySegmenter

ECHO = [sys.executable, "-m", "clickseg.ext_child", "--mode", "echo"]


def model_input(width=6, height=5, clicks=(), seed=0, radius=0):
    rng = np.random.default_rng(seed)
    img = RasterImage(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))
    prev = ProbabilityMap(rng.random((height, width)))
    return assemble_model_input(img, ClickSequence(tuple(clicks)), prev, radius)


def child_script(body: str) -> list[str]:
    handshake = 'print(\'{"protocol": "clickseg-ext", "version": 1}\', flush=True)'
    return [sys.executable, "-c", f"import sys, json, base64\n{handshake}\n{body}"]


def test_echo_child_returns_previous_mask():
    mi = model_input()
    with ExternalSegmenter(ECHO, timeout=20) as seg:
        out = seg.predict(mi)
    # previous mask goes over the wire as f32
    assert np.allclose(out.values, mi.previous_mask.values, atol=1e-6)


def test_multiple_calls_share_one_child():
    with ExternalSegmenter(ECHO, timeout=20) as seg:
        for seed in range(3):
            mi = model_input(seed=seed)
            out = seg.predict(mi)
            assert np.allclose(out.values, mi.previous_mask.values, atol=1e-6)


def test_toy_child_matches_in_process_model(tmp_path):
    # radius 0 makes disk support == click centers, so the child's proximity
    # reconstruction is exact and the two paths must agree to f32 precision.
    params = ToyModelParams(np.linspace(-1, 1, 8))
    from clickseg.segmenter import save_params

    path = tmp_path / "m.params"
    save_params(params, path)
    mi = model_input(clicks=(Click(1, 1, 1), Click(4, 3, 0)), radius=0)
    expected = ToySegmenter(params).predict(mi)
    cmd = [sys.executable, "-m", "clickseg.ext_child", "--mode", "toy",
           "--params", str(path)]
    with ExternalSegmenter(cmd, timeout=20) as seg:
        out = seg.predict(mi)
    assert np.allclose(out.values, expected.values, atol=1e-6)


def test_wrong_dimension_response_is_error():
    body = (
        "for line in sys.stdin:\n"
        "    msg = json.loads(line)\n"
        "    bad = base64.b64encode(b'\\x00' * 8).decode()\n"
        "    print(json.dumps({'id': msg['id'], 'prob_map': bad}), flush=True)\n"
    )
    with ExternalSegmenter(child_script(body), timeout=20) as seg:
        with pytest.raises(ExternalProtocolError, match="values"):
            seg.predict(model_input())


def test_out_of_range_values_are_error():
    body = (
        "import struct\n"
        "for line in sys.stdin:\n"
        "    msg = json.loads(line)\n"
        "    n = msg['width'] * msg['height']\n"
        "    raw = struct.pack('<%df' % n, *([2.0] * n))\n"
        "    print(json.dumps({'id': msg['id'],"
        " 'prob_map': base64.b64encode(raw).decode()}), flush=True)\n"
    )
    with ExternalSegmenter(child_script(body), timeout=20) as seg:
        with pytest.raises(ExternalProtocolError):
            seg.predict(model_input())


def test_child_exit_mid_call_is_process_error():
    body = "sys.stdin.readline()\nsys.exit(3)\n"
    with ExternalSegmenter(child_script(body), timeout=20) as seg:
        with pytest.raises(ExternalProcessExit):
            seg.predict(model_input())
        # subsequent calls fail fast
        with pytest.raises(ExternalProcessExit):
            seg.predict(model_input())


def test_bad_handshake_rejected():
    cmd = [sys.executable, "-c", "print('{\"protocol\": \"something-else\"}')"]
    with pytest.raises(ExternalProtocolError):
        ExternalSegmenter(cmd, timeout=20)


def test_call_timeout():
    cmd = ECHO + ["--delay", "5"]
    with ExternalSegmenter(cmd, timeout=0.5) as seg:
        with pytest.raises(ExternalTimeout):
            seg.predict(model_input())


def test_mismatched_response_id_is_error():
    body = (
        "for line in sys.stdin:\n"
        "    msg = json.loads(line)\n"
        "    print(json.dumps({'id': 999, 'prob_map': ''}), flush=True)\n"
    )
    with ExternalSegmenter(child_script(body), timeout=20) as seg:
        with pytest.raises(ExternalProtocolError, match="id"):
            seg.predict(model_input())
