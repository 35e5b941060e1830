import socket
import threading
import time

import pytest
import uvicorn
from click.testing import CliRunner

from scribeloop.cli import main
from scribeloop.model import Origin, Status
from scribeloop.orchestrator import Workspace
from scribeloop.service import create_app
from scribeloop.store import Decision
from scribeloop.synthetic import generate_corpus, scripted_detections

from test_orchestrator import make_plan


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="module")
def server(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-ws")
    corpus = generate_corpus(root, leaves=2, seed=21)
    make_plan(root)
    ws = Workspace(root)
    port = _free_port()
    config = uvicorn.Config(create_app(ws), host="127.0.0.1", port=port, log_level="warning")
    srv = uvicorn.Server(config)
    thread = threading.Thread(target=srv.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not srv.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}", ws, corpus
    srv.should_exit = True
    thread.join(timeout=5)
    ws.close()


def run_cli(url, *args):
    runner = CliRunner()
    return runner.invoke(main, ["--server", url, *args], catch_exceptions=False)


class TestCliClient:
    def test_full_workflow_through_http(self, server, tmp_path):
        url, ws, corpus = server

        r = run_cli(url, "preprocess")
        assert r.exit_code == 0, r.output
        assert "8 columns" in r.output

        r = run_cli(url, "bootstrap", "--scribe", "B", "--sides", "recto",
                    "--tau", "0.55", "--nms", "0.3")
        assert r.exit_code == 0
        assert "pending annotations" in r.output

        for ann in ws.store.query(status=Status.PENDING):
            ws.store.decide(ann.id, Decision("accept"))

        r = run_cli(url, "cycle", "start")
        assert r.exit_code == 0
        assert "cycle 1: exported" in r.output

        r = run_cli(url, "cycle", "status")
        assert "exported" in r.output

        state = ws.cycle_state()
        records = scripted_detections(corpus, state.manifest.inference_columns)
        det_file = tmp_path / "dets.jsonl"
        from scribeloop.dataset import write_detections

        write_detections(records, det_file)
        r = run_cli(url, "detections", "submit", str(det_file))
        assert r.exit_code == 0
        assert "in_review" in r.output

        for ann in ws.store.query(status=Status.PENDING, origin=Origin.DETECTOR):
            ws.store.decide(ann.id, Decision("accept"))
        r = run_cli(url, "cycle", "merge")
        assert "merged" in r.output

        stats_csv = tmp_path / "stats.csv"
        r = run_cli(url, "stats", "--out", str(stats_csv))
        assert r.exit_code == 0
        lines = stats_csv.read_text().splitlines()
        assert lines[0] == "scribe,occurrences,columns,occ_per_column,mean_confidence"
        assert any(row.startswith("total,") for row in lines)

        sweep_csv = tmp_path / "sweep.csv"
        r = run_cli(url, "eval", "sweep", "--target", "B",
                    "--taus", "0.70:0.85:0.01", "--out", str(sweep_csv))
        assert r.exit_code == 0
        assert len(sweep_csv.read_text().splitlines()) == 17  # header + 16 points

        svg = tmp_path / "sweep.svg"
        r = run_cli(url, "eval", "plot", "--sweep", str(sweep_csv), "--out", str(svg))
        assert r.exit_code == 0
        assert svg.read_text()[:5] == "<?xml"

        attr_csv = tmp_path / "attr.csv"
        r = run_cli(url, "attribute", "--rule", "any_above", "--tau", "0.8",
                    "--unit", "page", "--out", str(attr_csv))
        assert r.exit_code == 0
        assert "synthetica_1v,"  in attr_csv.read_text()

    def test_error_body_surfaces_in_message(self, server, tmp_path):
        url, _, _ = server
        bad = tmp_path / "bad.jsonl"
        bad.write_text("not a record\n")
        r = CliRunner().invoke(main, ["--server", url, "detections", "submit", str(bad)])
        assert r.exit_code != 0
        assert "MalformedRecord" in r.output or "PreviousCycleOpen" in r.output

    def test_unreachable_server_message(self):
        r = CliRunner().invoke(main, ["--server", "http://127.0.0.1:9", "cycle", "status"])
        assert r.exit_code != 0
        assert "scribeloop serve" in r.output
