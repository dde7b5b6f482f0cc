"""Shared fixtures: tiny additive-world datasets and a local HTTP backend
implementing all four wire protocols for the remote client tests."""

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from proofplan.core import GoldStep, GoldTree, Origin, ProofInstance, Statement


def make_instance(uid="ex1", with_tree=True, extra=()):
    """Two-step additive-world instance over single-token concept texts."""
    premises = [
        Statement("p1", "c0", Origin.INSTANCE),
        Statement("p2", "c1"),
        Statement("p3", "c2 c3"),
        Statement("p4", "c4"),
        Statement("p5", "c5 c6"),
    ] + [Statement(f"x{i}", text) for i, text in enumerate(extra)]
    goal = Statement("goal", "c0 c1 c2 c3")
    tree = None
    if with_tree:
        tree = GoldTree((
            GoldStep("p1", "p2", Statement("i1", "c0 c1")),
            GoldStep("i1", "p3", Statement("i2", "c0 c1 c2 c3")),
        ), root_id="i2")
    return ProofInstance(uid, tuple(premises), goal, tree)


@pytest.fixture
def instance():
    return make_instance()


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
    return path


NATIVE_RECORD = {
    "id": "ex1",
    "goal": "c0 c1 c2 c3",
    "premises": {"p1": "c0", "p2": "c1", "p3": "c2 c3", "p4": "c4", "p5": "c5 c6"},
    "instance_facts": ["p1"],
    "steps": [
        {"left": "p1", "right": "p2", "id": "i1", "text": "c0 c1"},
        {"left": "i1", "right": "p3", "id": "i2", "text": "c0 c1 c2 c3"},
    ],
    "root": "i2",
}


@pytest.fixture
def native_file(tmp_path):
    return write_jsonl(tmp_path / "native.jsonl", [NATIVE_RECORD])


def stub_vector(text, dim=4):
    """Deterministic per-text vector; components in [1, 16]."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return [1 + digest[i] % 16 for i in range(dim)]


class _BackendHandler(BaseHTTPRequestHandler):
    """One endpoint per wire protocol, plus deliberately broken routes."""

    def log_message(self, *args):
        pass

    def _reply(self, status, payload):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        request = json.loads(self.rfile.read(length) or b"{}")
        self.server.requests.append((self.path, request))

        if self.path == "/encode":
            self._reply(200, {"vectors": [stub_vector(t) for t in request["texts"]]})
        elif self.path == "/step":
            # echo deduction: join of the two inputs, k copies distinguished
            base = f"{request['left']} and {request['right']}"
            self._reply(200, {"generations": [base] + [
                f"{base} variant {i}" for i in range(1, request["k"])]})
        elif self.path == "/entail":
            score = 1.0 if request["premise"] == request["hypothesis"] else 0.25
            self._reply(200, {"score": score})
        elif self.path == "/score":
            logits = [float(len(p["left"]) + 2 * len(p["right"]))
                      for p in request["pairs"]]
            self._reply(200, {"logits": logits})
        elif self.path == "/flaky":
            self.server.flaky_calls += 1
            if self.server.flaky_calls % 3:
                self._reply(500, {"oops": True})
            else:
                self._reply(200, {"score": 0.5})
        elif self.path == "/bad-arity":
            self._reply(200, {"vectors": [[1.0, 2.0]]})
        elif self.path == "/not-json":
            body = b"<html>hello</html>"
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        else:
            self._reply(404, {"error": "no such route"})


@pytest.fixture(scope="session")
def backend():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _BackendHandler)
    server.requests = []
    server.flaky_calls = 0
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    try:
        yield base
    finally:
        server.shutdown()
        thread.join(timeout=5)
