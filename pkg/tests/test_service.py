import base64
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from clickseg.cfr import CfrConfig
from clickseg.core import (
    BinaryMask,
    RasterImage,
    image_to_png_bytes,
    mask_from_png_bytes,
    mask_to_png_bytes,
    prob_map_from_bytes,
)
from clickseg.segmenter import ToyModelParams, ToySegmenter
from clickseg.service import create_app


class CountingToy(ToySegmenter):
    def __init__(self, params):
        super().__init__(params)
        self.calls = 0
        self._lock = threading.Lock()

    def predict(self, model_input):
        with self._lock:
            self.calls += 1
        return super().predict(model_input)


@pytest.fixture()
def segmenter():
    weights = np.zeros(8)
    weights[3], weights[4] = 6.0, -6.0  # respond visibly to clicks
    return CountingToy(ToyModelParams(weights))


@pytest.fixture()
def client(segmenter):
    app = create_app(segmenter, default_cfr=CfrConfig(), max_dim=256)
    return TestClient(app)


def png_b64(width=24, height=24, seed=0) -> str:
    rng = np.random.default_rng(seed)
    img = RasterImage(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))
    return base64.b64encode(image_to_png_bytes(img)).decode()


def create_session(client, **extra):
    body = {"image_b64": png_b64(), **extra}
    resp = client.post("/api/sessions", json=body)
    assert resp.status_code == 201
    return resp.json()


def test_create_session_json(client):
    data = create_session(client)
    assert data["width"] == 24 and data["height"] == 24
    assert len(data["session_id"]) == 32


def test_create_session_multipart(client):
    rng = np.random.default_rng(1)
    img = RasterImage(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8))
    resp = client.post(
        "/api/sessions",
        files={"image": ("a.png", image_to_png_bytes(img), "image/png")},
        data={"cfr_mode": "fixed", "cfr_n": "1"},
    )
    assert resp.status_code == 201


def test_create_rejects_garbage_image(client):
    resp = client.post(
        "/api/sessions",
        json={"image_b64": base64.b64encode(b"junk").decode()},
    )
    assert resp.status_code == 400


def test_create_rejects_oversized_image(client):
    resp = client.post("/api/sessions", json={"image_b64": png_b64(300, 300)})
    assert resp.status_code == 413


def test_click_returns_mask_and_step(client):
    sid = create_session(client)["session_id"]
    resp = client.post(f"/api/sessions/{sid}/clicks", json={"u": 5, "v": 5, "label": 1})
    assert resp.status_code == 200
    body = resp.json()
    assert body["step"] == 1
    assert body["inner_steps"] == 0
    mask = mask_from_png_bytes(base64.b64decode(body["mask"]))
    assert (mask.width, mask.height) == (24, 24)
    assert mask.area > 0  # the disk drives probabilities above 0.5
    stats = body["prob_stats"]
    assert 0.0 <= stats["min"] <= stats["mean"] <= stats["max"] <= 1.0


def test_out_of_bounds_click_is_422_and_state_unchanged(client):
    sid = create_session(client)["session_id"]
    resp = client.post(f"/api/sessions/{sid}/clicks", json={"u": 99, "v": 5, "label": 1})
    assert resp.status_code == 422
    state = client.get(f"/api/sessions/{sid}").json()
    assert state["step"] == 0 and state["clicks"] == []


def test_unknown_session_is_404(client):
    assert client.get("/api/sessions/deadbeef").status_code == 404
    assert (
        client.post("/api/sessions/deadbeef/clicks", json={"u": 1, "v": 1, "label": 1})
        .status_code
        == 404
    )


def test_cfr_fixed_one_reports_inner_steps(segmenter):
    app = create_app(segmenter, default_cfr=CfrConfig(mode="fixed", n=1))
    client = TestClient(app)
    sid = create_session(client)["session_id"]
    before = segmenter.calls
    body = client.post(
        f"/api/sessions/{sid}/clicks", json={"u": 5, "v": 5, "label": 1}
    ).json()
    assert body["inner_steps"] == 1
    assert segmenter.calls - before == 2


def test_refine_without_clicks_is_409(client):
    sid = create_session(client)["session_id"]
    resp = client.post(f"/api/sessions/{sid}/refine", json={"mode": "fixed", "n": 2})
    assert resp.status_code == 409


def test_refine_fixed_issues_exact_inner_calls(client, segmenter):
    sid = create_session(client)["session_id"]
    client.post(f"/api/sessions/{sid}/clicks", json={"u": 5, "v": 5, "label": 1})
    before = segmenter.calls
    body = client.post(
        f"/api/sessions/{sid}/refine", json={"mode": "fixed", "n": 2}
    ).json()
    assert segmenter.calls - before == 2
    assert body["inner_steps"] == 2
    assert body["step"] == 1  # click count unchanged


def test_refine_adaptive_huge_threshold_is_single_step(client):
    sid = create_session(client)["session_id"]
    client.post(f"/api/sessions/{sid}/clicks", json={"u": 5, "v": 5, "label": 1})
    body = client.post(
        f"/api/sessions/{sid}/refine",
        json={"mode": "adaptive", "n": 5, "threshold": 1_000_000},
    ).json()
    assert body["inner_steps"] == 1


def test_undo_then_state_is_fresh(client):
    sid = create_session(client)["session_id"]
    client.post(f"/api/sessions/{sid}/clicks", json={"u": 5, "v": 5, "label": 1})
    resp = client.post(f"/api/sessions/{sid}/undo")
    assert resp.status_code == 200
    assert resp.json()["step"] == 0
    state = client.get(f"/api/sessions/{sid}").json()
    assert state["clicks"] == []
    mask = mask_from_png_bytes(base64.b64decode(state["mask"]))
    assert mask.area == 0


def test_undo_replay_matches_direct_path(client):
    sid = create_session(client)["session_id"]
    client.post(f"/api/sessions/{sid}/clicks", json={"u": 5, "v": 5, "label": 1})
    direct = client.get(f"/api/sessions/{sid}").json()["mask"]
    client.post(f"/api/sessions/{sid}/clicks", json={"u": 15, "v": 15, "label": 0})
    client.post(f"/api/sessions/{sid}/undo")
    replayed = client.get(f"/api/sessions/{sid}").json()["mask"]
    assert replayed == direct


def test_undo_on_empty_session_is_409(client):
    sid = create_session(client)["session_id"]
    assert client.post(f"/api/sessions/{sid}/undo").status_code == 409


def test_delete_session(client):
    sid = create_session(client)["session_id"]
    assert client.delete(f"/api/sessions/{sid}").status_code == 204
    assert client.get(f"/api/sessions/{sid}").status_code == 404
    assert client.delete(f"/api/sessions/{sid}").status_code == 404


def test_full_flag_returns_probability_map(client):
    sid = create_session(client)["session_id"]
    body = client.post(
        f"/api/sessions/{sid}/clicks", json={"u": 5, "v": 5, "label": 1},
        params={"full": 1},
    ).json()
    prob = prob_map_from_bytes(base64.b64decode(body["prob_map"]))
    assert (prob.width, prob.height) == (24, 24)
    assert abs(prob.values.mean() - body["prob_stats"]["mean"]) < 1e-6


def test_live_iou_with_ground_truth(client):
    bits = np.zeros((24, 24), dtype=bool)
    bits[4:12, 4:12] = True
    gt_b64 = base64.b64encode(mask_to_png_bytes(BinaryMask(bits))).decode()
    sid = create_session(client, gt_b64=gt_b64)["session_id"]
    body = client.post(
        f"/api/sessions/{sid}/clicks", json={"u": 7, "v": 7, "label": 1}
    ).json()
    assert body["iou"] is not None
    assert 0.0 <= body["iou"] <= 1.0


def test_gt_dimension_mismatch_rejected(client):
    gt_b64 = base64.b64encode(mask_to_png_bytes(BinaryMask.zeros(5, 5))).decode()
    resp = client.post(
        "/api/sessions", json={"image_b64": png_b64(), "gt_b64": gt_b64}
    )
    assert resp.status_code == 400


def test_session_expiry(segmenter):
    app = create_app(segmenter, ttl_seconds=0.0)
    client = TestClient(app)
    sid = create_session(client)["session_id"]
    assert client.get(f"/api/sessions/{sid}").status_code == 404


def test_replaying_requests_reproduces_mask_bytes(segmenter):
    requests = [
        {"u": 5, "v": 5, "label": 1},
        {"u": 18, "v": 18, "label": 0},
        {"u": 10, "v": 12, "label": 1},
    ]

    def run():
        app = create_app(segmenter, default_cfr=CfrConfig(mode="fixed", n=1))
        client = TestClient(app)
        sid = create_session(client)["session_id"]
        masks = []
        for req in requests:
            masks.append(client.post(f"/api/sessions/{sid}/clicks", json=req).json()["mask"])
        return masks

    assert run() == run()


def test_concurrent_clicks_on_distinct_sessions(client):
    sids = [create_session(client)["session_id"] for i in range(4)]
    errors = []

    def hammer(sid, offset):
        try:
            for k in range(3):
                r = client.post(
                    f"/api/sessions/{sid}/clicks",
                    json={"u": 2 + offset + k, "v": 3 + k, "label": 1},
                )
                assert r.status_code == 200
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    threads = [
        threading.Thread(target=hammer, args=(sid, i)) for i, sid in enumerate(sids)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    for sid in sids:
        assert client.get(f"/api/sessions/{sid}").json()["step"] == 3
