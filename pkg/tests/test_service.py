"""REST service: upload, review, filter, override, metrics, durability."""

from __future__ import annotations

import threading

import pytest
from fastapi.testclient import TestClient

from nodulescreen.config import AppConfig
from nodulescreen.gateway import MockOracleParams, OutcomeKind
from nodulescreen.model import Decision
from nodulescreen.pipeline import mock_backend_for_study
from nodulescreen.service import create_app
from nodulescreen.store import save_study_dir

from .conftest import build_study


@pytest.fixture()
def store_dir(tmp_path):
    return tmp_path / "store"


@pytest.fixture()
def client(store_dir):
    app = create_app(AppConfig(store_dir=store_dir))
    with TestClient(app) as c:
        yield c


def bundle_files(tmp_path, study=None, name="upload-src"):
    study = study or build_study(study_id="study-a")
    src = tmp_path / name
    save_study_dir(study, src)
    return study, [
        ("files", (p.name, p.read_bytes(), "application/octet-stream"))
        for p in sorted(src.iterdir())
    ]


def upload(client, tmp_path, study=None, name="upload-src"):
    study, files = bundle_files(tmp_path, study, name)
    response = client.post("/studies", files=files)
    assert response.status_code == 201, response.text
    return study, response.json()


class TestHealthAndUpload:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"
        assert body["version"]

    def test_upload_and_list(self, client, tmp_path):
        study, body = upload(client, tmp_path)
        assert body == {"study_id": "study-a", "candidates": len(study.candidates)}
        listing = client.get("/studies").json()["studies"]
        assert listing == [
            {
                "study_id": "study-a",
                "candidates": len(study.candidates),
                "has_description": True,
                "verdicts": 0,
            }
        ]

    def test_duplicate_upload_is_a_conflict(self, client, tmp_path):
        upload(client, tmp_path)
        _, files = bundle_files(tmp_path, name="upload-dup")
        response = client.post("/studies", files=files)
        assert response.status_code == 409
        assert response.json() == {
            "code": "conflict",
            "message": "study 'study-a' already exists",
        }

    def test_unexpected_bundle_file_is_rejected(self, client):
        response = client.post(
            "/studies", files=[("files", ("malware.bin", b"x", "application/octet-stream"))]
        )
        assert response.status_code == 422
        assert response.json()["code"] == "invalid"


class TestStudyView:
    def test_view_shape(self, client, tmp_path):
        study, _ = upload(client, tmp_path)
        view = client.get("/studies/study-a").json()
        assert view["study_id"] == "study-a"
        assert view["dims"] == list(study.volume.dims)
        assert view["spacing"] == list(study.volume.spacing)
        assert view["has_truth"] is True
        assert view["decision_log_length"] == 0
        assert len(view["candidates"]) == len(study.candidates)
        card = view["candidates"][0]
        assert set(card) == {
            "id",
            "centroid",
            "confidence",
            "location",
            "verdict",
            "prefilter",
            "render_url",
        }
        assert card["verdict"] is None
        assert card["prefilter"] in ("match", "mismatch", "inconclusive")
        assert card["render_url"].endswith(f"/candidates/{card['id']}/render")
        located = [c for c in view["candidates"] if c["location"]]
        assert located
        assert located[0]["location"]["laterality"] in ("left", "right")

    def test_unknown_study_404(self, client):
        response = client.get("/studies/ghost")
        assert response.status_code == 404
        assert response.json() == {"code": "not_found", "message": "no study 'ghost'"}


class TestDescription:
    def test_put_description_returns_parse(self, client, tmp_path):
        upload(client, tmp_path)
        text = "No nodule in the lul. A 6 mm nodule in the rll."
        response = client.put("/studies/study-a/description", content=text.encode())
        assert response.status_code == 200
        body = response.json()
        assert body["description"] == text
        descriptors = body["parse"]["descriptors"]
        assert len(descriptors) == 2
        assert descriptors[0]["polarity"] == "negated"
        assert descriptors[1]["size_mm"] == [6.0, 6.0]

    def test_description_survives_a_restart(self, client, tmp_path, store_dir):
        upload(client, tmp_path)
        client.put("/studies/study-a/description", content=b"A 4 mm nodule in the rul.")
        fresh = TestClient(create_app(AppConfig(store_dir=store_dir)))
        view = fresh.get("/studies/study-a").json()
        assert view["description"] == "A 4 mm nodule in the rul."

    def test_put_description_on_unknown_study_404(self, client):
        assert client.put("/studies/ghost/description", content=b"x").status_code == 404


class TestFilter:
    def test_filter_populates_verdicts(self, client, tmp_path):
        study, _ = upload(client, tmp_path)
        response = client.post("/studies/study-a/filter", params={"seed": 3})
        assert response.status_code == 200
        body = response.json()
        assert body["config"] == "all_on"
        assert body["seed"] == 3
        assert len(body["verdicts"]) == len(study.candidates)
        assert set(body["prefilter"]) == {c.id for c in study.candidates}
        view = client.get("/studies/study-a").json()
        assert all(c["verdict"] is not None for c in view["candidates"])
        assert view["decision_log_length"] == len(study.candidates)

    def test_filter_without_description_is_invalid(self, client, tmp_path):
        study = build_study(study_id="study-b", describe=False)
        upload(client, tmp_path, study=study)
        response = client.post("/studies/study-b/filter")
        assert response.status_code == 422
        body = response.json()
        assert body["code"] == "invalid"
        assert "description" in body["message"]

    def test_unknown_strategy_label_is_invalid(self, client, tmp_path):
        upload(client, tmp_path)
        response = client.post(
            "/studies/study-a/filter", params={"config_label": "warp_off"}
        )
        assert response.status_code == 422

    def test_concurrent_filter_gets_conflict(self, store_dir, tmp_path):
        entered = threading.Event()
        release = threading.Event()

        class BlockingBackend:
            id = "blocking"

            def complete(self, request):
                entered.set()
                release.wait(timeout=30)
                return mock_backend_for_study(study, MockOracleParams()).complete(request)

        app = create_app(
            AppConfig(store_dir=store_dir),
            backend_factory=lambda cfg, bundle: BlockingBackend(),
        )
        client = TestClient(app)
        study, files = bundle_files(tmp_path)
        assert client.post("/studies", files=files).status_code == 201

        results = {}

        def slow_filter():
            results["slow"] = client.post("/studies/study-a/filter")

        worker = threading.Thread(target=slow_filter)
        worker.start()
        assert entered.wait(timeout=30)
        blocked = client.post("/studies/study-a/filter")
        assert blocked.status_code == 409
        assert blocked.json()["code"] == "conflict"
        release.set()
        worker.join(timeout=30)
        assert results["slow"].status_code == 200

    def test_filter_survives_a_restart(self, client, tmp_path, store_dir):
        upload(client, tmp_path)
        client.post("/studies/study-a/filter")
        fresh = TestClient(create_app(AppConfig(store_dir=store_dir)))
        view = fresh.get("/studies/study-a").json()
        assert all(c["verdict"] is not None for c in view["candidates"])


class TestVerdictOverride:
    def test_override_appends_to_the_log(self, client, tmp_path):
        study, _ = upload(client, tmp_path)
        client.post("/studies/study-a/filter")
        target = study.candidates[0].id
        response = client.put(
            f"/studies/study-a/verdicts/{target}",
            json={"decision": "discard", "rationale": "reader disagrees"},
        )
        assert response.status_code == 200
        body = response.json()
        assert body["verdict"]["source"] == "human_override"
        assert body["verdict"]["decision"] == "discard"
        assert body["decision_log_length"] == len(study.candidates) + 1
        view = client.get("/studies/study-a").json()
        card = next(c for c in view["candidates"] if c["id"] == target)
        assert card["verdict"]["source"] == "human_override"

    def test_override_retry_is_idempotent_on_state(self, client, tmp_path):
        study, _ = upload(client, tmp_path)
        client.post("/studies/study-a/filter")
        target = study.candidates[0].id
        payload = {"decision": "keep", "rationale": "second look"}
        first = client.put(f"/studies/study-a/verdicts/{target}", json=payload)
        second = client.put(f"/studies/study-a/verdicts/{target}", json=payload)
        assert first.status_code == second.status_code == 200
        assert first.json()["verdict"] == second.json()["verdict"]
        view = client.get("/studies/study-a").json()
        card = next(c for c in view["candidates"] if c["id"] == target)
        assert card["verdict"]["decision"] == "keep"

    def test_human_override_cannot_reject(self, client, tmp_path):
        study, _ = upload(client, tmp_path)
        target = study.candidates[0].id
        response = client.put(
            f"/studies/study-a/verdicts/{target}", json={"decision": "reject"}
        )
        assert response.status_code == 422
        assert response.json()["code"] == "invalid"

    def test_bad_decision_and_unknown_targets(self, client, tmp_path):
        study, _ = upload(client, tmp_path)
        target = study.candidates[0].id
        bad = client.put(
            f"/studies/study-a/verdicts/{target}", json={"decision": "maybe"}
        )
        assert bad.status_code == 422
        assert "keep/discard/reject" in bad.json()["message"]
        missing = client.put(
            "/studies/study-a/verdicts/cand-void", json={"decision": "keep"}
        )
        assert missing.status_code == 404
        ghost = client.put("/studies/ghost/verdicts/x", json={"decision": "keep"})
        assert ghost.status_code == 404


class TestMetrics:
    def test_metrics_reflect_overrides_immediately(self, client, tmp_path, store_dir):
        study, _ = upload(client, tmp_path)
        client.post("/studies/study-a/filter")
        before = client.get("/studies/study-a/metrics").json()
        assert before["sensitivity"] == 1.0
        assert before["fdr"] == 0.0
        assert (store_dir / "study-a" / "metrics.json").exists()

        kept_true = study.candidates[0].id  # detector emits nodules first
        client.put(
            f"/studies/study-a/verdicts/{kept_true}", json={"decision": "discard"}
        )
        after = client.get("/studies/study-a/metrics").json()
        assert after["counts"]["fn"] == before["counts"]["fn"] + 1
        assert after["sensitivity"] < 1.0

    def test_metrics_without_verdicts_is_invalid(self, client, tmp_path):
        upload(client, tmp_path)
        response = client.get("/studies/study-a/metrics")
        assert response.status_code == 422
        assert "verdicts" in response.json()["message"]

    def test_metrics_unknown_study_404(self, client):
        assert client.get("/studies/ghost/metrics").status_code == 404


class TestRender:
    def test_png_round_trip(self, client, tmp_path):
        study, _ = upload(client, tmp_path)
        target = study.candidates[0].id
        response = client.get(f"/studies/study-a/candidates/{target}/render")
        assert response.status_code == 200
        assert response.headers["content-type"] == "image/png"
        assert response.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_image_index_bounds_follow_the_strategy(self, client, tmp_path):
        study, _ = upload(client, tmp_path)
        target = study.candidates[0].id
        single = client.get(
            f"/studies/study-a/candidates/{target}/render", params={"image": 2}
        )
        assert single.status_code == 422
        assert "out of range" in single.json()["message"]
        multi = client.get(
            f"/studies/study-a/candidates/{target}/render",
            params={"image": 2, "config_label": "single_vision_input_off"},
        )
        assert multi.status_code == 200
        assert multi.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_candidate_404(self, client, tmp_path):
        upload(client, tmp_path)
        response = client.get("/studies/study-a/candidates/cand-void/render")
        assert response.status_code == 404


class TestParse:
    def test_parse_endpoint(self, client):
        response = client.post(
            "/parse", json={"text": "Two lesions measuring 4 mm in the lul."}
        )
        assert response.status_code == 200
        body = response.json()
        descriptor = body["descriptors"][0]
        assert descriptor["count"] == 2
        assert descriptor["size_mm"] == [4.0, 4.0]
        assert descriptor["laterality"] == "left"
        assert descriptor["lobe"] == "upper"
        assert descriptor["polarity"] == "affirmed"

    def test_parse_requires_string_text(self, client):
        response = client.post("/parse", json={"text": 7})
        assert response.status_code == 422
        assert response.json()["code"] == "invalid"
