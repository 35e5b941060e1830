import pytest
from fastapi.testclient import TestClient

from scribeloop.model import Origin, Status
from scribeloop.orchestrator import Workspace
from scribeloop.service import create_app
from scribeloop.store import Decision
from scribeloop.synthetic import generate_corpus, scripted_detections

from test_orchestrator import make_plan


@pytest.fixture(scope="module")
def prepared(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    corpus = generate_corpus(root, leaves=2, seed=13)
    make_plan(root)
    return root, corpus


@pytest.fixture
def client(prepared, tmp_path):
    import shutil

    root, corpus = prepared
    target = tmp_path / "ws"
    shutil.copytree(root, target)
    ws = Workspace(target)
    with TestClient(create_app(ws)) as c:
        c.workspace = ws
        c.corpus = corpus
        yield c
    ws.close()


def run_pipeline(client):
    assert client.post("/api/pipeline/preprocess", json={}).status_code == 200
    r = client.post(
        "/api/pipeline/bootstrap", json={"scribe": "B", "sides": ["recto"], "tau": 0.55}
    )
    assert r.status_code == 200 and r.json()["created"] > 0
    for ann in client.workspace.store.query(status=Status.PENDING):
        client.workspace.store.decide(ann.id, Decision("accept"))


class TestReviewApi:
    def test_progress_empty_workspace(self, client):
        body = client.get("/api/progress").json()
        assert body == {"cycle": 0, "phase": "none", "pending_count": 0}

    def test_columns_listing_and_paging(self, client):
        run_pipeline(client)
        body = client.get("/api/columns", params={"page_size": 3}).json()
        assert body["total"] == 8  # 2 leaves x 2 sides x 2 columns
        assert len(body["items"]) == 3
        rest = client.get("/api/columns", params={"page": 3, "page_size": 3}).json()
        assert len(rest["items"]) == 2

    def test_columns_status_filter(self, client):
        run_pipeline(client)
        pending = client.get("/api/columns", params={"status": "pending"}).json()
        assert pending["total"] == 0  # everything was accepted above
        accepted = client.get("/api/columns", params={"status": "accepted"}).json()
        assert accepted["total"] > 0

    def test_column_image_served_as_png(self, client):
        run_pipeline(client)
        cid = client.get("/api/columns").json()["items"][0]["column_id"]
        r = client.get(f"/api/columns/{cid}/image")
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert r.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_column_404_with_error_body(self, client):
        r = client.get("/api/columns/ghost_1r_c0/boxes")
        assert r.status_code == 404
        body = r.json()
        assert body["error"] == "UnknownColumn"
        assert "ghost_1r_c0" in body["detail"]

    def test_boxes_and_decisions(self, client):
        run_pipeline(client)
        state = client.post("/api/cycles/start", json={}).json()
        records = scripted_detections(client.corpus, state["manifest"]["inference_columns"])
        r = client.post(
            "/api/detections",
            json={"content": "\n".join(_format(rec) for rec in records)},
        )
        assert r.status_code == 200
        assert r.json()["phase"] == "in_review"

        cid = records[0].column_id
        boxes = client.get(f"/api/columns/{cid}/boxes").json()["items"]
        pending = [b for b in boxes if b["status"] == "pending"]
        assert pending

        first = pending[0]
        r = client.post(f"/api/boxes/{first['id']}/decision", json={"action": "accept"})
        assert r.status_code == 200
        assert r.json()["status"] == "accepted"

        r = client.post(f"/api/boxes/{first['id']}/decision", json={"action": "reject"})
        assert r.status_code == 409
        assert r.json()["error"] == "AlreadyDecided"

        second = pending[1]
        box = dict(second["box"])
        box["x"] += 1
        r = client.post(f"/api/boxes/{second['id']}/decision", json={"action": "adjust", "box": box})
        assert r.status_code == 200
        assert r.json()["status"] == "adjusted"
        assert r.json()["adjusted_box"]["x"] == box["x"]

        r = client.post(
            f"/api/boxes/{pending[2]['id']}/decision",
            json={"action": "adjust", "box": {"x": 0, "y": 0, "w": 10000, "h": 10}},
        )
        assert r.status_code == 422
        assert r.json()["error"] == "BoxOutOfBounds"

        r = client.post("/api/boxes/a99999/decision", json={"action": "accept"})
        assert r.status_code == 404

    def test_progress_counts_pending(self, client):
        run_pipeline(client)
        state = client.post("/api/cycles/start", json={}).json()
        records = scripted_detections(client.corpus, state["manifest"]["inference_columns"])
        client.post("/api/detections", json={"content": "\n".join(_format(r) for r in records)})
        body = client.get("/api/progress").json()
        assert body["cycle"] == 1
        assert body["phase"] == "in_review"
        assert body["pending_count"] == len(records)


class TestPipelineApi:
    def test_cycle_lifecycle_over_http(self, client):
        run_pipeline(client)
        state = client.post("/api/cycles/start", json={}).json()
        assert state["phase"] == "exported"
        assert client.get("/api/cycles/current").json()["phase"] == "exported"

        r = client.post("/api/cycles/start", json={})
        assert r.status_code == 409
        assert r.json()["error"] == "PreviousCycleOpen"

        r = client.post("/api/cycles/merge")
        assert r.status_code == 409

        records = scripted_detections(client.corpus, state["manifest"]["inference_columns"])
        client.post("/api/detections", json={"content": "\n".join(_format(x) for x in records)})
        for ann in client.workspace.store.query(status=Status.PENDING, origin=Origin.DETECTOR):
            client.workspace.store.decide(ann.id, Decision("accept"))
        assert client.post("/api/cycles/merge").json()["phase"] == "merged"

    def test_detection_submission_validations(self, client):
        run_pipeline(client)
        client.post("/api/cycles/start", json={})
        r = client.post("/api/detections", json={})
        assert r.status_code == 422
        bad = scripted_detections(client.corpus, ["synthetica_1r_c0"])  # training column
        r = client.post("/api/detections", json={"content": "\n".join(_format(x) for x in bad)})
        assert r.status_code == 409
        assert r.json()["error"] == "ColumnNotInInferenceSet"

    def test_detections_from_server_side_path(self, client):
        run_pipeline(client)
        state = client.post("/api/cycles/start", json={}).json()
        records = scripted_detections(client.corpus, state["manifest"]["inference_columns"])
        path = client.workspace.save_detection_records(records, "cycle1.jsonl")
        r = client.post("/api/detections", json={"path": str(path)})
        assert r.status_code == 200
        assert r.json()["pending_count"] == len(records)


class TestEvalApi:
    def _with_detections(self, client):
        run_pipeline(client)
        state = client.post("/api/cycles/start", json={}).json()
        records = scripted_detections(client.corpus, state["manifest"]["inference_columns"])
        client.post("/api/detections", json={"content": "\n".join(_format(x) for x in records)})
        return records

    def test_stats_rows(self, client):
        self._with_detections(client)
        rows = client.post("/api/eval/stats", json={}).json()["rows"]
        by_scribe = {r["scribe"]: r for r in rows}
        assert set(by_scribe) == {"B", "C", "total"}
        assert by_scribe["total"]["columns"] == 8

    def test_sweep_points(self, client):
        self._with_detections(client)
        body = client.post(
            "/api/eval/sweep", json={"target": "B", "taus": [0.5, 0.8]}
        ).json()
        assert len(body["points"]) == 2
        p1, p2 = body["points"]
        assert p2["tp"] <= p1["tp"]

    def test_attribute_rows(self, client):
        self._with_detections(client)
        body = client.post(
            "/api/eval/attribute",
            json={"rule": "any_above", "tau": 0.8, "unit": "page"},
        ).json()
        decisions = {r["unit_id"]: r["decision"] for r in body["rows"]}
        assert decisions["synthetica_1v"] == "target_scribe"  # odd verso = target hand
        assert decisions["synthetica_2v"] == "other"
        assert decisions["synthetica_1r"] == "abstain"  # no detections on recto


def _format(rec):
    from scribeloop.dataset import format_detection

    return format_detection(rec)
