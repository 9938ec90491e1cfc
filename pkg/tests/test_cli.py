import json
import subprocess
import sys
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from stamp.cli import main
from stamp.harness import read_jsonl
from stamp.protocol import StepOutput, ToolAction, render_step_output


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    assert main(["synth", "--master-seed", "1", "--count", "4", "--out", str(out)]) == 0
    return out


def _json_lines(text):
    return [json.loads(x) for x in text.splitlines() if x.startswith("{")]


def test_synth_is_deterministic(tmp_path, suite, capsys):
    assert main(["synth", "--master-seed", "1", "--count", "4", "--out", str(tmp_path)]) == 0
    first = sorted(p.read_bytes() for p in suite.glob("*.bundle.json"))
    assert sorted(p.read_bytes() for p in tmp_path.glob("*.bundle.json")) == first
    assert len(first) == 4


def test_verify_exit_codes(tmp_path, suite, capsys):
    files = sorted(str(p) for p in suite.glob("*.bundle.json"))
    assert main(["verify", *files]) == 0
    assert all(r["ok"] and r["uniqueness"]["is_unique"] for r in _json_lines(capsys.readouterr().out))
    doc = json.loads(open(files[0]).read())
    submit = next(p for p in doc["page_graph"]["pages"] if p["id"] == doc["page_graph"]["submission_page_id"])
    submit["elements"] = [e for e in submit["elements"] if e["testid"] != "answer-input"]
    broken = tmp_path / "broken.bundle.json"
    broken.write_text(json.dumps(doc))
    assert main(["verify", str(broken)]) == 1
    (tmp_path / "junk.bundle.json").write_text("{")
    assert main(["verify", str(tmp_path / "junk.bundle.json")]) == 1


def test_run_with_transcript(tmp_path, suite, capsys):
    bundle = sorted(suite.glob("*.bundle.json"))[0]
    assert main(["run", "--bundle", str(bundle), "--transcript", str(tmp_path / "t.jsonl"),
                 "--out", str(tmp_path / "traj.jsonl")]) == 0
    result = _json_lines(capsys.readouterr().out)[0]
    lines = list(read_jsonl(tmp_path / "t.jsonl"))
    assert result["success"] and len(lines) == result["steps"]
    assert lines[-1]["effect"] == {"kind": "graded", "testid": "answer-submit", "note": "success"}


def test_collect_emit_rollout_bench(tmp_path, suite, capsys):
    traj = tmp_path / "traj.jsonl"
    assert main(["collect", "--bundles", str(suite), "--out", str(traj)]) == 0
    assert _json_lines(capsys.readouterr().out)[0]["successful"] == 4
    sft = tmp_path / "sft.jsonl"
    assert main(["emit-sft", "--traj", str(traj), "--ratio", "1:1", "--n", "3", "--out", str(sft)]) == 0
    stats = _json_lines(capsys.readouterr().out)[0]
    assert abs(stats["memory"] - stats["ordinary"]) <= 1
    assert all(r["weights"]["w_bal"] == 3 for r in read_jsonl(sft) if r["ids"]["memory"])
    scores = tmp_path / "scores.jsonl"
    assert main(["rollout", "--bundles", str(suite), "--group-size", "4", "--out", str(scores)]) == 0
    rows = list(read_jsonl(scores))
    assert {"task_id", "traj_id", "step_id", "score", "advantage"} <= set(rows[0])
    report = tmp_path / "report.json"
    assert main(["bench", "--suite", str(suite), "--k", "3", "--report", str(report)]) == 0
    agg = json.loads(report.read_text())["aggregate"]
    assert agg["t_acc"] == agg["m_acc"] == agg["pass@3"] == 1.0
    assert main(["bench", "--suite", str(suite), "--suppress-memory", "--report", str(report)]) == 0
    agg = json.loads(report.read_text())["aggregate"]
    assert (agg["t_acc"], agg["m_acc"]) == (1.0, 0.0)


def test_emit_sft_unreachable_ratio(tmp_path, capsys):
    empty = tmp_path / "none.jsonl"
    empty.write_text("")
    assert main(["emit-sft", "--traj", str(empty), "--ratio", "1:1", "--out", str(tmp_path / "o.jsonl")]) == 1


class _Handler(BaseHTTPRequestHandler):
    reply = render_step_output(StepOutput("tap", "Tap the top bar", "", ToolAction("click", coordinate=(500, 60))))

    def do_POST(self):
        self.rfile.read(int(self.headers["Content-Length"]))
        body = json.dumps({"choices": [{"message": {"content": self.reply}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


def test_service_agent_bench_and_audit(tmp_path, suite, monkeypatch, capsys):
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        monkeypatch.setenv("STAMP_AGENT_URL", f"http://127.0.0.1:{server.server_port}/chat")
        report = tmp_path / "r.json"
        code = main(["--audit", str(tmp_path / "audit"), "bench", "--suite", str(suite), "--agent", "service",
                     "--max-steps", "3", "--report", str(report)])
    finally:
        server.shutdown()
    assert code == 0
    assert json.loads(report.read_text())["aggregate"]["t_acc"] == 0
    audits = list((tmp_path / "audit").glob("*.json"))
    assert len(audits) == 2 * 4 * 3


def test_transport_failures_exit_two(tmp_path, suite, monkeypatch, capsys):
    monkeypatch.delenv("STAMP_AGENT_URL", raising=False)
    report = str(tmp_path / "r.json")
    assert main(["bench", "--suite", str(suite), "--agent", "service", "--report", report]) == 2
    monkeypatch.setenv("STAMP_AGENT_URL", "http://127.0.0.1:9/chat")
    assert main(["bench", "--suite", str(suite), "--agent", "service", "--report", report]) == 2
    assert main(["synth", "--master-seed", "1", "--out", str(tmp_path), "--external"]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "stamp", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "bench" in out.stdout


def test_unparseable_planner_reply_exits_two(tmp_path, suite, monkeypatch):
    class Garbage(_Handler):
        reply = "not json"

    server = HTTPServer(("127.0.0.1", 0), Garbage)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        url = f"http://127.0.0.1:{server.server_port}/chat"
        monkeypatch.setenv("STAMP_PLANNER_URL", url)
        monkeypatch.setenv("STAMP_WORKER_URL", url)
        bundle = sorted(suite.glob("*.bundle.json"))[0]
        assert main(["run", "--bundle", str(bundle), "--planner", "service"]) == 2
    finally:
        server.shutdown()
