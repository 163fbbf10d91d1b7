"""Opt-in live test against a real chat-completions deployment.

Skipped by default so the suite stays network-free. Enable with:

    TAONET_REMOTE_TEST=1 TAONET_LLM_BASE_URL=... TAONET_LLM_MODEL=... \
        TAONET_LLM_API_KEY=... pytest tests/test_remote_integration.py -s
"""

import os
import socket

import pytest

from taonet.gateway import GenerationRequest, RemoteBackend

pytestmark = pytest.mark.skipif(
    os.environ.get("TAONET_REMOTE_TEST") != "1",
    reason="remote integration disabled (set TAONET_REMOTE_TEST=1)")

# captured at import time, before the suite-wide guard patches it
_REAL_CONNECT = socket.socket.connect
_REAL_CONNECT_EX = socket.socket.connect_ex


@pytest.fixture(autouse=True)
def allow_network(monkeypatch):
    # undo the suite-wide socket guard for this module only
    monkeypatch.setattr(socket.socket, "connect", _REAL_CONNECT)
    monkeypatch.setattr(socket.socket, "connect_ex", _REAL_CONNECT_EX)


def test_live_completion():
    backend = RemoteBackend()
    text = backend.complete(GenerationRequest(
        prompt="Reply with exactly one word: WeChat", max_tokens=8))
    assert isinstance(text, str) and text.strip()
