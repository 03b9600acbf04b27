import json
import threading
import time

import pytest
import requests

from active_ensemble.config import build_dataset, config_from_dict
from active_ensemble.loop import run_experiment
from active_ensemble.service import AnnotationService, make_server


def live_config(**schedule_overrides):
    schedule = {"initial_budget": 20, "step_budget": 10, "rounds": 2,
                "epochs_per_round": 6, "batch_size": 16}
    schedule.update(schedule_overrides)
    return {
        "dataset": {"name": "digits", "n_train": 300, "n_test": 80, "seed": 2},
        "model": {"hidden_widths": [16]},
        "ensemble": {"n_members": 2},
        "schedule": schedule,
        "strategy": "vr",
        "oracle": "live",
        "seeds": [7],
    }


@pytest.fixture
def server(tmp_path):
    service = AnnotationService(checkpoint_dir=str(tmp_path / "ckpt"))
    httpd = make_server(service, port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{httpd.server_port}"
    yield base, service, tmp_path
    httpd.shutdown()


def wait_for_phase(base, sid, phases=("awaiting-labels", "finished"),
                   timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = requests.get(f"{base}/api/session/{sid}/status").json()
        if status["phase"] in phases:
            return status
        if status["phase"] == "failed":
            raise AssertionError(f"session failed: {status['error']}")
        time.sleep(0.05)
    raise TimeoutError("session did not settle in time")


def ground_truth_labels(batch, dataset):
    return [{"index": item["index"],
             "label": int(dataset.y_train[item["index"]])}
            for item in batch["items"]]


class TestSessionLifecycle:
    def test_create_returns_201_and_distinct_ids(self, server):
        base, _, _ = server
        r1 = requests.post(f"{base}/api/session", json=live_config())
        r2 = requests.post(f"{base}/api/session", json=live_config())
        assert r1.status_code == 201 and r2.status_code == 201
        assert r1.json()["session_id"] != r2.json()["session_id"]

    def test_malformed_body_400(self, server):
        base, _, _ = server
        r = requests.post(f"{base}/api/session", data=b"{nope",
                          headers={"Content-Type": "application/json"})
        assert r.status_code == 400
        assert r.json()["code"] == "invalid_json"

    def test_invalid_config_400_with_detail(self, server):
        base, _, _ = server
        doc = live_config()
        doc["strategy"] = "corset"
        r = requests.post(f"{base}/api/session", json=doc)
        assert r.status_code == 400
        assert "strategy" in r.json()["detail"]

    def test_simulated_oracle_rejected(self, server):
        base, _, _ = server
        doc = live_config()
        doc["oracle"] = "simulated"
        r = requests.post(f"{base}/api/session", json=doc)
        assert r.status_code == 400

    def test_unknown_session_404(self, server):
        base, _, _ = server
        r = requests.get(f"{base}/api/session/abcdef123456/status")
        assert r.status_code == 404

    def test_batch_during_training_409(self, server):
        base, _, _ = server
        doc = live_config(epochs_per_round=1200, batch_size=4)
        sid = requests.post(f"{base}/api/session", json=doc).json()["session_id"]
        r = requests.get(f"{base}/api/session/{sid}/batch")
        assert r.status_code == 409
        assert r.json()["code"] == "training"


class TestBatchAndLabels:
    def test_full_session_drives_pools_and_history(self, server):
        base, _, _ = server
        dataset = build_dataset(config_from_dict(live_config()).dataset)
        sid = requests.post(f"{base}/api/session",
                            json=live_config()).json()["session_id"]
        status = wait_for_phase(base, sid)
        assert status["round"] == 0 and status["n_labeled"] == 20
        for expected_round in (1, 2):
            batch = requests.get(f"{base}/api/session/{sid}/batch").json()
            assert len(batch["items"]) == 10
            assert batch["class_names"] == [str(c) for c in range(10)]
            # idempotent until labels arrive
            again = requests.get(f"{base}/api/session/{sid}/batch").json()
            assert again["batch_id"] == batch["batch_id"]
            assert [i["index"] for i in again["items"]] == [
                i["index"] for i in batch["items"]]
            r = requests.post(
                f"{base}/api/session/{sid}/labels",
                json={"batch_id": batch["batch_id"],
                      "labels": ground_truth_labels(batch, dataset)})
            assert r.status_code == 200
            assert r.json()["n_labeled"] == 20 + 10 * expected_round
            status = wait_for_phase(base, sid)
        assert status["phase"] == "finished"
        assert [h["round"] for h in status["history"]] == [0, 1, 2]
        r = requests.get(f"{base}/api/session/{sid}/batch")
        assert r.status_code == 410

    def test_image_payload_decodes(self, server):
        import base64

        from PIL import Image
        import io

        base, _, _ = server
        sid = requests.post(f"{base}/api/session",
                            json=live_config()).json()["session_id"]
        wait_for_phase(base, sid)
        batch = requests.get(f"{base}/api/session/{sid}/batch").json()
        raw = base64.b64decode(batch["items"][0]["image"])
        img = Image.open(io.BytesIO(raw))
        assert img.size == (28, 28)

    def test_stale_batch_id_409(self, server):
        base, _, _ = server
        sid = requests.post(f"{base}/api/session",
                            json=live_config()).json()["session_id"]
        wait_for_phase(base, sid)
        batch = requests.get(f"{base}/api/session/{sid}/batch").json()
        r = requests.post(f"{base}/api/session/{sid}/labels",
                          json={"batch_id": "round-9999",
                                "labels": [{"index": i["index"], "label": 0}
                                           for i in batch["items"]]})
        assert r.status_code == 409
        assert r.json()["code"] == "stale_batch"

    def test_label_out_of_range_422(self, server):
        base, _, _ = server
        sid = requests.post(f"{base}/api/session",
                            json=live_config()).json()["session_id"]
        wait_for_phase(base, sid)
        batch = requests.get(f"{base}/api/session/{sid}/batch").json()
        labels = [{"index": i["index"], "label": 10} for i in batch["items"]]
        r = requests.post(f"{base}/api/session/{sid}/labels",
                          json={"batch_id": batch["batch_id"], "labels": labels})
        assert r.status_code == 422
        assert r.json()["code"] == "label_out_of_range"

    def test_partial_coverage_422_lists_missing(self, server):
        base, _, _ = server
        sid = requests.post(f"{base}/api/session",
                            json=live_config()).json()["session_id"]
        wait_for_phase(base, sid)
        batch = requests.get(f"{base}/api/session/{sid}/batch").json()
        labels = [{"index": i["index"], "label": 1} for i in batch["items"][:-2]]
        r = requests.post(f"{base}/api/session/{sid}/labels",
                          json={"batch_id": batch["batch_id"], "labels": labels})
        assert r.status_code == 422
        missing = r.json()["detail"]["missing"]
        assert sorted(missing) == sorted(
            i["index"] for i in batch["items"][-2:])

    def test_double_submit_one_wins(self, server):
        base, _, _ = server
        dataset = build_dataset(config_from_dict(live_config()).dataset)
        sid = requests.post(f"{base}/api/session",
                            json=live_config()).json()["session_id"]
        wait_for_phase(base, sid)
        batch = requests.get(f"{base}/api/session/{sid}/batch").json()
        payload = {"batch_id": batch["batch_id"],
                   "labels": ground_truth_labels(batch, dataset)}
        results = []

        def post():
            results.append(requests.post(
                f"{base}/api/session/{sid}/labels", json=payload).status_code)

        threads = [threading.Thread(target=post) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(results) == [200, 409]
        status = wait_for_phase(base, sid)
        assert status["n_labeled"] == 30


class TestRestart:
    def test_restart_restores_outstanding_batch(self, server):
        base, service, tmp_path = server
        dataset = build_dataset(config_from_dict(live_config()).dataset)
        sid = requests.post(f"{base}/api/session",
                            json=live_config()).json()["session_id"]
        wait_for_phase(base, sid)
        batch = requests.get(f"{base}/api/session/{sid}/batch").json()

        # a brand-new service over the same checkpoint directory
        service2 = AnnotationService(checkpoint_dir=str(tmp_path / "ckpt"))
        httpd2 = make_server(service2, port=0)
        thread = threading.Thread(target=httpd2.serve_forever, daemon=True)
        thread.start()
        base2 = f"http://127.0.0.1:{httpd2.server_port}"
        try:
            restored = requests.get(f"{base2}/api/session/{sid}/batch").json()
            assert restored["batch_id"] == batch["batch_id"]
            assert [i["index"] for i in restored["items"]] == [
                i["index"] for i in batch["items"]]
            # the restored session still accepts labels and advances
            r = requests.post(
                f"{base2}/api/session/{sid}/labels",
                json={"batch_id": restored["batch_id"],
                      "labels": ground_truth_labels(restored, dataset)})
            assert r.status_code == 200
            status = wait_for_phase(base2, sid)
            assert status["n_labeled"] == 30
        finally:
            httpd2.shutdown()


class TestLiveMatchesSimulated:
    def test_ground_truth_session_reproduces_simulated_run(self, server):
        base, _, _ = server
        config = config_from_dict(live_config())
        dataset = build_dataset(config.dataset)
        expected = run_experiment(build_dataset(config.dataset), config,
                                  seed=config.seeds[0])
        sid = requests.post(f"{base}/api/session",
                            json=live_config()).json()["session_id"]
        status = wait_for_phase(base, sid)
        while status["phase"] != "finished":
            batch = requests.get(f"{base}/api/session/{sid}/batch").json()
            requests.post(f"{base}/api/session/{sid}/labels",
                          json={"batch_id": batch["batch_id"],
                                "labels": ground_truth_labels(batch, dataset)})
            status = wait_for_phase(base, sid)
        got = [h["accuracy"] for h in status["history"]]
        assert got == [r["test_accuracy"] for r in expected]


class TestStaticServing:
    def test_fallback_page_without_bundle(self, server):
        base, _, _ = server
        r = requests.get(f"{base}/")
        assert r.status_code == 200
        assert "Annotation service" in r.text

    def test_bundle_served_when_configured(self, tmp_path):
        static = tmp_path / "dist"
        static.mkdir()
        (static / "index.html").write_text("<html>console</html>")
        (static / "app.js").write_text("console.log('hi')")
        service = AnnotationService(checkpoint_dir=str(tmp_path / "ckpt"),
                                    static_dir=str(static))
        httpd = make_server(service, port=0)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        base = f"http://127.0.0.1:{httpd.server_port}"
        try:
            assert requests.get(f"{base}/").text == "<html>console</html>"
            js = requests.get(f"{base}/app.js")
            assert js.status_code == 200
            assert "javascript" in js.headers["Content-Type"]
            assert requests.get(f"{base}/../secrets").status_code in (400, 404)
        finally:
            httpd.shutdown()
