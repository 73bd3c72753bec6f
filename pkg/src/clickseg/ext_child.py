"""Reference child process for the external segmenter protocol.

Run as ``python -m clickseg.ext_child --mode toy --params model.params`` to
serve a saved toy model to any harness speaking the protocol, or with
``--mode echo`` to return the previous mask unchanged (handy as a test
double). ``--delay`` inserts a per-request sleep for timeout testing.
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
import time

import numpy as np

from .core import ClickSequence, ProbabilityMap, RasterImage
from .encoding import ClickMaps, ModelInput
from .external import PROTOCOL_NAME, PROTOCOL_VERSION
from .segmenter import ToyModelParams, ToySegmenter, load_params


def _decode_request(msg: dict) -> ModelInput:
    w, h = int(msg["width"]), int(msg["height"])
    image = RasterImage(
        np.frombuffer(base64.b64decode(msg["image"]), dtype=np.uint8).reshape(h, w, 3)
    )
    pos = np.frombuffer(base64.b64decode(msg["pos_map"]), dtype=np.uint8).reshape(h, w)
    neg = np.frombuffer(base64.b64decode(msg["neg_map"]), dtype=np.uint8).reshape(h, w)
    prev = np.frombuffer(base64.b64decode(msg["prev_mask"]), dtype="<f4").reshape(h, w)
    maps = ClickMaps(
        ProbabilityMap(pos.astype(np.float64)), ProbabilityMap(neg.astype(np.float64))
    )
    # The wire carries no click centers; approximate them for the toy model's
    # proximity features by the disk pixels themselves.
    clicks = _clicks_from_maps(pos, neg)
    return ModelInput(
        image=image,
        click_maps=maps,
        previous_mask=ProbabilityMap(np.clip(prev.astype(np.float64), 0.0, 1.0)),
        clicks=clicks,
    )


def _clicks_from_maps(pos: np.ndarray, neg: np.ndarray) -> ClickSequence:
    from .core import Click

    clicks = []
    seen = set()
    for label, grid in ((1, pos), (0, neg)):
        for v, u in np.argwhere(grid != 0):
            if (int(u), int(v)) not in seen:
                seen.add((int(u), int(v)))
                clicks.append(Click(int(u), int(v), label))
    return ClickSequence(tuple(clicks))


def serve(predict, delay: float = 0.0) -> None:
    print(json.dumps({"protocol": PROTOCOL_NAME, "version": PROTOCOL_VERSION}), flush=True)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        model_input = _decode_request(msg)
        prob = predict(model_input)
        if delay > 0:
            time.sleep(delay)
        response = {
            "id": msg["id"],
            "prob_map": base64.b64encode(
                prob.values.astype("<f4").tobytes()
            ).decode("ascii"),
        }
        print(json.dumps(response), flush=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--mode", choices=("echo", "toy"), default="echo")
    parser.add_argument("--params", help="toy-model parameter file (mode=toy)")
    parser.add_argument("--delay", type=float, default=0.0,
                        help="seconds to sleep before each response")
    args = parser.parse_args(argv)

    if args.mode == "toy":
        params = load_params(args.params) if args.params else ToyModelParams.zeros()
        segmenter = ToySegmenter(params)
        predict = segmenter.predict
    else:
        predict = lambda mi: mi.previous_mask  # noqa: E731
    serve(predict, delay=args.delay)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
