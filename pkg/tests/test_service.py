import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from dragforge.cli import EXIT_OK, cli_run
from dragforge.pipeline import ARTIFACT_FILES
from dragforge.scenarios import bump_drag_scenario, write_scenario
from dragforge.service import create_app


@pytest.fixture
def scene(tmp_path):
    config = write_scenario(bump_drag_scenario(), tmp_path / "scene")
    return config.parent


@pytest.fixture
def service(tmp_path):
    app = create_app(session_root=str(tmp_path / "sessions"))
    with TestClient(app) as client:
        yield client, tmp_path / "sessions"


SEGMENT_BODY = {"n_segments": 9, "compactness": 0.5, "max_iters": 10}
MASK_BODY = {"pairs": [{"handle": [26, 32], "target": [34, 32]}]}
DRAG_BODY = {
    "instruction": {
        "n_steps": 16,
        "max_updates": 300,
        "learning_rate": 0.01,
        "stop_radius": 1.0,
    },
    "region_mode": "semantic",
    "square_radius": 3,
    "background_weight": 0.1,
    "rollback": "point",
}
FIELD_JSON = json.dumps({"kind": "analytic_bump", "amplitude": 4.0, "sigma": 2.0})


def create_session(client, scene, field_json=FIELD_JSON):
    files = {
        "latent": ("latent.dft1", (scene / "latent.dft1").read_bytes()),
        "features": ("seg_features.dft1", (scene / "seg_features.dft1").read_bytes()),
    }
    resp = client.post("/sessions", files=files, data={"field": field_json})
    assert resp.status_code == 201, resp.text
    return resp.json()["id"]


def wait_done(client, sid, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/sessions/{sid}").json()["status"]
        if status in ("done", "failed"):
            return status
        time.sleep(0.05)
    raise TimeoutError("session did not finish")


def run_full_session(client, scene):
    sid = create_session(client, scene)
    assert client.post(f"/sessions/{sid}/segment", json=SEGMENT_BODY).status_code == 200
    assert client.post(f"/sessions/{sid}/mask", json=MASK_BODY).status_code == 200
    assert client.post(f"/sessions/{sid}/drag", json=DRAG_BODY).status_code == 202
    assert wait_done(client, sid) == "done"
    return sid


class TestStateMachine:
    def test_segment_before_upload_is_404(self, service):
        client, _ = service
        assert client.post("/sessions/nope/segment", json=SEGMENT_BODY).status_code == 404

    def test_mask_before_segment_is_409(self, service, scene):
        client, _ = service
        sid = create_session(client, scene)
        assert client.post(f"/sessions/{sid}/mask", json=MASK_BODY).status_code == 409

    def test_drag_before_mask_is_409(self, service, scene):
        client, _ = service
        sid = create_session(client, scene)
        client.post(f"/sessions/{sid}/segment", json=SEGMENT_BODY)
        assert client.post(f"/sessions/{sid}/drag", json=DRAG_BODY).status_code == 409

    def test_segment_twice_is_409(self, service, scene):
        client, _ = service
        sid = create_session(client, scene)
        assert client.post(f"/sessions/{sid}/segment", json=SEGMENT_BODY).status_code == 200
        assert client.post(f"/sessions/{sid}/segment", json=SEGMENT_BODY).status_code == 409

    def test_final_artifact_before_drag_is_409(self, service, scene):
        client, _ = service
        sid = create_session(client, scene)
        client.post(f"/sessions/{sid}/segment", json=SEGMENT_BODY)
        assert client.get(f"/sessions/{sid}/artifacts/final").status_code == 409
        # but labels are already available
        assert client.get(f"/sessions/{sid}/artifacts/labels").status_code == 200

    def test_invalid_payload_is_422(self, service, scene):
        client, _ = service
        sid = create_session(client, scene)
        resp = client.post(
            f"/sessions/{sid}/segment", json={"n_segments": -3}
        )
        assert resp.status_code == 422

    def test_unknown_artifact_is_404(self, service, scene):
        client, _ = service
        sid = create_session(client, scene)
        assert client.get(f"/sessions/{sid}/artifacts/bogus").status_code == 404

    def test_delete_removes_session(self, service, scene):
        client, root = service
        sid = create_session(client, scene)
        assert client.delete(f"/sessions/{sid}").status_code == 204
        assert client.get(f"/sessions/{sid}").status_code == 404
        assert not (root / sid).exists()

    def test_bad_latent_upload_is_422(self, service):
        client, _ = service
        resp = client.post(
            "/sessions", files={"latent": ("x.bin", b"not a grid")}
        )
        assert resp.status_code == 422


class TestHappyPath:
    def test_full_session_matches_cli_byte_for_byte(self, service, scene, tmp_path):
        client, root = service
        out_cli = tmp_path / "out_cli"
        assert cli_run(str(scene / "config.json"), str(out_cli)) == EXIT_OK

        sid = run_full_session(client, scene)
        session_dir = root / sid
        compared = 0
        for name in ("labels", "labels_raw", "mask", "trajectory", "events",
                      "final", "report"):
            fname = ARTIFACT_FILES[name]
            a = (out_cli / fname).read_bytes()
            b = (session_dir / fname).read_bytes()
            assert hashlib.sha256(a).hexdigest() == hashlib.sha256(b).hexdigest(), fname
            compared += 1
        assert compared == 7

    def test_artifact_endpoints_serve_files(self, service, scene):
        client, root = service
        sid = run_full_session(client, scene)
        for name in ("mask", "labels", "trajectory", "final", "report"):
            resp = client.get(f"/sessions/{sid}/artifacts/{name}")
            assert resp.status_code == 200, name
            assert len(resp.content) > 0
        report = client.get(f"/sessions/{sid}/artifacts/report").json()
        assert report["mean_distance"] <= 2.0

    def test_events_stream_is_ordered_and_resumable(self, service, scene):
        client, _ = service
        sid = run_full_session(client, scene)
        with client.stream("GET", f"/sessions/{sid}/events") as resp:
            lines = [json.loads(l) for l in resp.iter_lines() if l]
        assert lines[-1]["event"] == "done"
        updates = [e for e in lines if "k" in e]
        ks = [e["k"] for e in updates]
        assert ks == sorted(ks)
        # resume from an offset: get strictly the suffix
        with client.stream("GET", f"/sessions/{sid}/events?start=5") as resp:
            tail = [json.loads(l) for l in resp.iter_lines() if l]
        assert tail == lines[5:]

    def test_events_stream_live_while_running(self, service, scene):
        client, _ = service
        sid = create_session(client, scene)
        client.post(f"/sessions/{sid}/segment", json=SEGMENT_BODY)
        client.post(f"/sessions/{sid}/mask", json=MASK_BODY)
        client.post(f"/sessions/{sid}/drag", json=DRAG_BODY)
        # subscribe immediately: records must arrive while the worker runs
        # and the stream must end with the terminal record
        with client.stream("GET", f"/sessions/{sid}/events") as resp:
            lines = [json.loads(l) for l in resp.iter_lines() if l]
        assert lines[-1]["event"] == "done"
        assert lines[-1]["converged"] is True
        assert len(lines) > 1
        assert client.get(f"/sessions/{sid}").json()["status"] == "done"

    def test_two_concurrent_sessions_are_isolated(self, service, scene, tmp_path):
        client, root = service
        other_scene = write_scenario(bump_drag_scenario(), tmp_path / "scene2").parent
        # different drag on the second session
        other_mask = {"pairs": [{"handle": [26, 32], "target": [30, 36]}]}

        def run_one(mask_body):
            sid = create_session(client, scene)
            client.post(f"/sessions/{sid}/segment", json=SEGMENT_BODY)
            client.post(f"/sessions/{sid}/mask", json=mask_body)
            client.post(f"/sessions/{sid}/drag", json=DRAG_BODY)
            wait_done(client, sid)
            return sid

        with ThreadPoolExecutor(max_workers=2) as pool:
            fa = pool.submit(run_one, MASK_BODY)
            fb = pool.submit(run_one, other_mask)
            sid_a, sid_b = fa.result(), fb.result()

        assert sid_a != sid_b
        traj_a = client.get(f"/sessions/{sid_a}/artifacts/trajectory").json()
        traj_b = client.get(f"/sessions/{sid_b}/artifacts/trajectory").json()
        assert traj_a["final_points"] != traj_b["final_points"]
        assert (root / sid_a).is_dir() and (root / sid_b).is_dir()
