"""HTTP contract: upload/recognize/predict-crop, error paths, caching, concurrency."""
from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from obirec.network import (
    build_mobilenet_v1,
    build_yolov3_tiny,
    count_flops,
    count_params,
    random_weights,
)
from obirec.service import create_app

NAMES = ("axe", "boat", "cart")


def png_bytes(h=96, w=140, seed=0):
    rng = np.random.default_rng(seed)
    img = (rng.random((h, w, 3)) * 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture(scope="module")
def detector():
    return random_weights(build_yolov3_tiny(3, input_size=64), seed=21, class_names=NAMES)


@pytest.fixture(scope="module")
def classifier():
    return random_weights(build_mobilenet_v1(3, 0.25), seed=22, class_names=NAMES)


@pytest.fixture(scope="module")
def client(detector, classifier):
    app = create_app(detector, classifier, class_names=NAMES, max_upload_bytes=1_000_000)
    return TestClient(app)


def upload(client, **kwargs) -> dict:
    resp = client.post("/api/images", content=png_bytes(**kwargs))
    assert resp.status_code == 200
    return resp.json()


class TestUpload:
    def test_valid_png(self, client):
        body = upload(client)
        assert set(body) == {"image_id", "width", "height"}
        assert (body["width"], body["height"]) == (140, 96)

    def test_empty_body_rejected(self, client):
        resp = client.post("/api/images", content=b"")
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "undecodable_image"

    def test_oversized_body_rejected(self, client):
        resp = client.post("/api/images", content=b"x" * 1_000_001)
        assert resp.status_code == 413
        assert resp.json()["error"]["code"] == "payload_too_large"

    def test_jpeg_accepted(self, client):
        rng = np.random.default_rng(3)
        img = (rng.random((40, 40, 3)) * 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(img).save(buf, format="JPEG")
        resp = client.post("/api/images", content=buf.getvalue())
        assert resp.status_code == 200


class TestRecognize:
    def test_response_schema(self, client):
        image_id = upload(client)["image_id"]
        resp = client.post(f"/api/images/{image_id}/recognize?confidence=0.1")
        assert resp.status_code == 200
        body = resp.json()
        assert body["model"] == "yolov3-tiny"
        assert body["confidence_used"] == 0.1
        for d in body["detections"]:
            assert set(d) == {"x", "y", "w", "h", "class_index", "class_name", "confidence"}
            assert 0 <= d["confidence"] <= 1
            assert d["class_name"] == NAMES[d["class_index"]]

    def test_threshold_ceiling_empty(self, client):
        image_id = upload(client)["image_id"]
        resp = client.post(f"/api/images/{image_id}/recognize?confidence=1.0")
        assert resp.json()["detections"] == []

    def test_count_monotone_in_confidence(self, client):
        image_id = upload(client, seed=5)["image_id"]
        counts = []
        for c in (0.1, 0.3, 0.5):
            resp = client.post(f"/api/images/{image_id}/recognize?confidence={c}")
            counts.append(len(resp.json()["detections"]))
        assert counts == sorted(counts, reverse=True)

    def test_idempotent(self, client):
        image_id = upload(client, seed=6)["image_id"]
        a = client.post(f"/api/images/{image_id}/recognize?confidence=0.2")
        b = client.post(f"/api/images/{image_id}/recognize?confidence=0.2")
        assert a.json() == b.json()

    def test_default_confidence(self, client):
        image_id = upload(client)["image_id"]
        resp = client.post(f"/api/images/{image_id}/recognize")
        assert resp.json()["confidence_used"] == 0.1

    def test_unknown_id(self, client):
        resp = client.post("/api/images/nope/recognize?confidence=0.1")
        assert resp.status_code == 404
        assert resp.json()["error"]["code"] == "unknown_image"

    def test_out_of_range_confidence(self, client):
        image_id = upload(client)["image_id"]
        for bad in (-0.1, 1.5):
            resp = client.post(f"/api/images/{image_id}/recognize?confidence={bad}")
            assert resp.status_code == 422
            assert resp.json()["error"]["code"] == "confidence_out_of_range"

    def test_session_isolation(self, client):
        id_a = upload(client, seed=7)["image_id"]
        id_b = upload(client, seed=8)["image_id"]
        a = client.post(f"/api/images/{id_a}/recognize?confidence=0.1").json()
        b = client.post(f"/api/images/{id_b}/recognize?confidence=0.1").json()
        assert a["detections"] != b["detections"]


class TestPredictCrop:
    def test_full_image_rect(self, client):
        body = upload(client)
        resp = client.post(
            f"/api/images/{body['image_id']}/predict-crop",
            json={"x": 0, "y": 0, "w": body["width"], "h": body["height"], "top_k": 2},
        )
        assert resp.status_code == 200
        preds = resp.json()["predictions"]
        assert len(preds) == 2
        assert preds[0]["probability"] >= preds[1]["probability"]
        assert set(preds[0]) == {"class_index", "class_name", "probability"}

    def test_rect_outside_image(self, client):
        image_id = upload(client)["image_id"]
        resp = client.post(
            f"/api/images/{image_id}/predict-crop",
            json={"x": 9000, "y": 9000, "w": 50, "h": 50},
        )
        assert resp.status_code == 422
        assert resp.json()["error"]["code"] == "bad_rect"

    def test_degenerate_rect(self, client):
        image_id = upload(client)["image_id"]
        resp = client.post(
            f"/api/images/{image_id}/predict-crop",
            json={"x": 10, "y": 10, "w": 2, "h": 2},
        )
        assert resp.status_code == 422

    def test_top_k_clamped(self, client):
        image_id = upload(client)["image_id"]
        resp = client.post(
            f"/api/images/{image_id}/predict-crop",
            json={"x": 0, "y": 0, "w": 60, "h": 60, "top_k": 50},
        )
        assert len(resp.json()["predictions"]) == 3

    def test_unknown_id(self, client):
        resp = client.post("/api/images/nope/predict-crop",
                           json={"x": 0, "y": 0, "w": 30, "h": 30})
        assert resp.status_code == 404

    def test_malformed_body(self, client):
        image_id = upload(client)["image_id"]
        resp = client.post(f"/api/images/{image_id}/predict-crop", json={"x": 0})
        assert resp.status_code == 422
        assert "error" in resp.json()


class TestMetaEndpoints:
    def test_classes_in_order(self, client):
        resp = client.get("/api/classes")
        assert resp.json() == list(NAMES)

    def test_health_with_models(self, client, detector, classifier):
        body = client.get("/api/health").json()
        assert body["status"] == "ok"
        assert body["models_loaded"] is True
        assert body["params"] == count_params(detector.spec) + count_params(classifier.spec)
        assert body["flops"] == count_flops(detector.spec) + count_flops(classifier.spec)

    def test_health_without_models(self):
        bare = TestClient(create_app())
        body = bare.get("/api/health").json()
        assert body["models_loaded"] is False
        assert body["params"] == 0

    def test_detector_only_params_delegate(self, detector):
        client = TestClient(create_app(detector))
        body = client.get("/api/health").json()
        assert body["models_loaded"] is False
        assert body["params"] == count_params(detector.spec)

    def test_endpoints_503_without_models(self):
        bare = TestClient(create_app())
        image_id = bare.post("/api/images", content=png_bytes()).json()["image_id"]
        assert bare.post(f"/api/images/{image_id}/recognize").status_code == 503
        assert bare.post(f"/api/images/{image_id}/predict-crop",
                         json={"x": 0, "y": 0, "w": 30, "h": 30}).status_code == 503


class TestSessionExpiry:
    def test_idle_session_expires(self, detector, classifier):
        import time

        client = TestClient(create_app(detector, classifier, session_ttl_seconds=0.05))
        image_id = client.post("/api/images", content=png_bytes()).json()["image_id"]
        time.sleep(0.1)
        resp = client.post(f"/api/images/{image_id}/recognize?confidence=0.5")
        assert resp.status_code == 404


class TestStaticFiles:
    def test_ui_served_from_static_dir(self, detector, classifier, tmp_path):
        (tmp_path / "index.html").write_text("<html><body>glyphs</body></html>")
        client = TestClient(create_app(detector, classifier, static_dir=tmp_path))
        resp = client.get("/")
        assert resp.status_code == 200
        assert "glyphs" in resp.text
        # API routes keep priority over the static mount
        assert client.get("/api/health").status_code == 200


class TestConcurrency:
    def test_mixed_requests_are_consistent(self, client):
        ids = [upload(client, seed=30 + i)["image_id"] for i in range(3)]
        reference = {
            i: client.post(f"/api/images/{i}/recognize?confidence=0.2").json() for i in ids
        }
        crop_ref = {
            i: client.post(f"/api/images/{i}/predict-crop",
                           json={"x": 5, "y": 5, "w": 40, "h": 40}).json()
            for i in ids
        }

        def hit(k):
            image_id = ids[k % len(ids)]
            if k % 2:
                resp = client.post(f"/api/images/{image_id}/recognize?confidence=0.2")
                return resp.json() == reference[image_id]
            resp = client.post(f"/api/images/{image_id}/predict-crop",
                               json={"x": 5, "y": 5, "w": 40, "h": 40})
            return resp.json() == crop_ref[image_id]

        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(hit, range(16)))
        assert all(results)
