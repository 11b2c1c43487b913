from __future__ import annotations

import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from planforge import assets_dir
from planforge.dpgc import load_config
from planforge.pddl.parser import parse_domain, parse_problem


@pytest.fixture(scope="session")
def artic3_domain_text() -> str:
    return (assets_dir() / "artic3.pddl").read_text()


@pytest.fixture(scope="session")
def artic3(artic3_domain_text):
    return parse_domain(artic3_domain_text)


@pytest.fixture(scope="session")
def artic3m():
    return parse_domain((assets_dir() / "artic3m.pddl").read_text())


@pytest.fixture(scope="session")
def micro_text() -> str:
    return (assets_dir() / "artic3_micro.pddl").read_text()


@pytest.fixture(scope="session")
def micro(artic3, micro_text):
    return parse_problem(micro_text, artic3)


@pytest.fixture(scope="session")
def artic3_config():
    return load_config(assets_dir() / "artic3.dpgc.json")


@pytest.fixture(scope="session")
def artic3m_config():
    return load_config(assets_dir() / "artic3m.dpgc.json")


MICRO_PLAN = """\
(grasp gripper1 gripper2)
(rotate-cw link2 link3 a0 a90 a90 a180)
(rotate-cw link3 link2 a180 a270 a90 a180)
(release gripper1 gripper2)
"""


@pytest.fixture(scope="session")
def micro_plan_text() -> str:
    return MICRO_PLAN


def make_stub_adapter(tmp_path: Path, body: str, *, name: str = "stub",
                      output: str = "file", dialect: str = "val_native",
                      timeout: float = 5.0):
    """Write a python stub planner script and an adapter pointing at it.

    The stub receives domain, problem and output paths as argv[1:4].
    """
    from planforge.drivers import PlannerAdapter

    script = tmp_path / f"{name}.py"
    script.write_text("import sys\nDOMAIN, PROBLEM, OUTPUT = sys.argv[1:4]\n" + body)
    return PlannerAdapter(
        name=name,
        executable=sys.executable,
        args=(str(script), "{domain}", "{problem}", "{output}"),
        output=output,
        dialect=dialect,
        timeout=timeout,
    )


class _StubHandler(BaseHTTPRequestHandler):
    def do_GET(self):
        self.send_response(200)
        self.end_headers()
        self.wfile.write(b"ok")

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length))
        result = self.server.reply(payload)
        if isinstance(result, int):
            self.send_response(result)
            self.end_headers()
            return
        body = json.dumps(result).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class StubEndpoint:
    """Tiny completion server; ``reply`` maps request payload to response
    payload (or an int HTTP status for error injection)."""

    def __init__(self, reply):
        self.server = HTTPServer(("127.0.0.1", 0), _StubHandler)
        self.server.reply = reply
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}/completion"

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_endpoint():
    servers = []

    def factory(reply):
        endpoint = StubEndpoint(reply)
        servers.append(endpoint)
        return endpoint

    yield factory
    for endpoint in servers:
        endpoint.close()
