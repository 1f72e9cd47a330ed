"""Shared fixtures: a real reward service on a local port.

The adapter is exercised over actual sockets against the service it is
written for; nothing here imports the scoring stack into the client.
"""

import json
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest
import requests

FIXTURES = Path(__file__).parents[2] / "tests" / "fixtures"


def _free_port() -> int:
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    return port


@pytest.fixture(scope="session")
def service_url():
    port = _free_port()
    proc = subprocess.Popen(
        [
            sys.executable,
            "-m",
            "uvicorn",
            "--factory",
            "graphssr.service:create_app",
            "--host",
            "127.0.0.1",
            "--port",
            str(port),
            "--log-level",
            "error",
        ]
    )
    url = f"http://127.0.0.1:{port}"
    try:
        deadline = time.monotonic() + 20
        while True:
            try:
                if requests.get(url + "/v1/health", timeout=1).status_code == 200:
                    break
            except requests.RequestException:
                pass
            if time.monotonic() > deadline:
                proc.terminate()
                raise RuntimeError("reward service did not come up")
            time.sleep(0.1)
        yield url
    finally:
        proc.terminate()
        proc.wait(timeout=10)


@pytest.fixture(scope="session")
def context_payload():
    return json.loads((FIXTURES / "context_citation.json").read_text())


@pytest.fixture(scope="session")
def task_payload():
    return json.loads((FIXTURES / "task_citation.json").read_text())


def _completion(name: str) -> str:
    return (FIXTURES / f"completion_{name}.txt").read_text()


@pytest.fixture(scope="session")
def completion_denoised():
    return _completion("denoised")


@pytest.fixture(scope="session")
def completion_largest():
    return _completion("largest")


@pytest.fixture(scope="session")
def completion_minimal():
    return _completion("minimal")


@pytest.fixture(scope="session")
def completion_answer_only():
    return _completion("answer_only")
