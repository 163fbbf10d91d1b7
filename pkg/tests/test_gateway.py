import json
import threading
import time

import httpx
import pytest

from taonet.errors import (
    AuthMissing,
    BackendUnreachable,
    MalformedResponse,
    RateLimited,
)
from taonet.gateway import (
    ENV_API_KEY,
    GenerationRequest,
    LlmGateway,
    MockKeywordBackend,
    MockOracleBackend,
    RemoteBackend,
    classify_ood,
    complete,
)
from taonet.ingest import LabelSpace, decode_ip_packet, tokenize_packet
from taonet.sps import SpsMode, UNMAPPED

from .conftest import build_ipv4_packet

SPACE = LabelSpace(id_labels=("QQMail", "QQMusic"), ood_labels=("WeChat", "Weibo"))


def make_sample(sample_id="pkt-1", label=None):
    record = decode_ip_packet(build_ipv4_packet(payload=b"\x80" * 24))
    sample = tokenize_packet(record, j=96, sample_id=sample_id, label=label)
    return sample, record


# --- request validation --------------------------------------------------------

def test_request_validation():
    with pytest.raises(ValueError):
        GenerationRequest(prompt="x", temperature=-0.1)
    with pytest.raises(ValueError):
        GenerationRequest(prompt="x", top_p=0.0)
    request = GenerationRequest(prompt="x")
    assert request.temperature == 0.7 and request.top_p == 0.95


# --- mock backends ---------------------------------------------------------------

def test_keyword_backend_matches_digest_cues():
    backend = MockKeywordBackend({"QQMusic": ["transport: tcp", "byte_entropy:"],
                                  "WeChat": ["never-present"]})
    sample, record = make_sample()
    prediction, bundle = classify_ood(backend, sample, record, SpsMode.COMPLETE,
                                      SPACE)
    assert "transport: tcp" in bundle.rendered_text
    assert prediction.label == "QQMusic"


def test_keyword_backend_default():
    backend = MockKeywordBackend({"A": ["zzz-not-there"]})
    assert complete(backend, GenerationRequest(prompt="hello")) == ""


def test_oracle_backend_returns_gold():
    backend = MockOracleBackend({"pkt-1": "WeChat"})
    sample, record = make_sample("pkt-1", label="WeChat")
    prediction, _ = classify_ood(backend, sample, record, SpsMode.STRICT, SPACE)
    assert prediction.label == "WeChat"
    assert prediction.route == "OOD"
    assert prediction.raw_text == "WeChat"


def test_classify_ood_canonicalizes_whitespace():
    class Echo:
        kind = "echo"

        def complete(self, request):
            return "  wechat "

    sample, record = make_sample()
    prediction, _ = classify_ood(Echo(), sample, record, SpsMode.STRICT, SPACE)
    assert prediction.label == "WeChat"


def test_classify_ood_unmapped_keeps_raw_text():
    class Chatty:
        kind = "chatty"

        def complete(self, request):
            return "This looks like bittorrent traffic to me."

    sample, record = make_sample()
    prediction, _ = classify_ood(Chatty(), sample, record, SpsMode.STRICT, SPACE)
    assert prediction.label == UNMAPPED
    assert "bittorrent" in prediction.raw_text


# --- remote backend ---------------------------------------------------------------

def counting_transport(responder):
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        return responder(request)

    return httpx.MockTransport(handler), calls


def test_auth_missing_before_any_network(monkeypatch):
    monkeypatch.delenv(ENV_API_KEY, raising=False)
    transport, calls = counting_transport(
        lambda request: httpx.Response(200, json={}))
    backend = RemoteBackend(base_url="http://llm.example", model="m",
                            transport=transport, sleep=lambda s: None)
    with pytest.raises(AuthMissing):
        backend.complete(GenerationRequest(prompt="x"))
    assert calls == []


def test_success_parses_first_choice():
    body = {"choices": [{"message": {"content": "WeChat"}}]}
    transport, calls = counting_transport(
        lambda request: httpx.Response(200, json=body))
    backend = RemoteBackend(base_url="http://llm.example", model="m",
                            api_key="k", transport=transport)
    assert backend.complete(GenerationRequest(prompt="x")) == "WeChat"
    assert len(calls) == 1
    sent = json.loads(calls[0].content)
    assert sent["model"] == "m"
    assert sent["messages"][0]["content"] == "x"
    assert sent["temperature"] == 0.7 and sent["top_p"] == 0.95
    assert calls[0].url.path.endswith("/chat/completions")


def test_retry_schedule_then_rate_limited():
    sleeps = []
    transport, calls = counting_transport(
        lambda request: httpx.Response(429, json={}))
    backend = RemoteBackend(base_url="http://llm.example", model="m", api_key="k",
                            transport=transport, sleep=sleeps.append)
    with pytest.raises(RateLimited):
        backend.complete(GenerationRequest(prompt="x"))
    assert len(calls) == 5  # max attempts
    assert sleeps == [1.0, 2.0, 4.0, 8.0]  # base 1s, factor 2


def test_server_errors_exhaust_to_unreachable():
    transport, calls = counting_transport(
        lambda request: httpx.Response(503, json={}))
    backend = RemoteBackend(base_url="http://llm.example", model="m", api_key="k",
                            transport=transport, sleep=lambda s: None)
    with pytest.raises(BackendUnreachable):
        backend.complete(GenerationRequest(prompt="x"))
    assert len(calls) == 5


def test_auth_rejection_not_retried():
    transport, calls = counting_transport(
        lambda request: httpx.Response(401, json={}))
    backend = RemoteBackend(base_url="http://llm.example", model="m", api_key="k",
                            transport=transport, sleep=lambda s: None)
    with pytest.raises(AuthMissing):
        backend.complete(GenerationRequest(prompt="x"))
    assert len(calls) == 1


def test_unexpected_status_is_malformed():
    transport, _ = counting_transport(
        lambda request: httpx.Response(418, text="teapot"))
    backend = RemoteBackend(base_url="http://llm.example", model="m", api_key="k",
                            transport=transport, sleep=lambda s: None)
    with pytest.raises(MalformedResponse):
        backend.complete(GenerationRequest(prompt="x"))


def test_missing_choices_is_malformed():
    transport, _ = counting_transport(
        lambda request: httpx.Response(200, json={"nope": 1}))
    backend = RemoteBackend(base_url="http://llm.example", model="m", api_key="k",
                            transport=transport, sleep=lambda s: None)
    with pytest.raises(MalformedResponse):
        backend.complete(GenerationRequest(prompt="x"))


def test_env_credentials(monkeypatch):
    monkeypatch.setenv(ENV_API_KEY, "from-env")
    body = {"choices": [{"message": {"content": "ok"}}]}
    transport, calls = counting_transport(
        lambda request: httpx.Response(200, json=body))
    backend = RemoteBackend(base_url="http://llm.example", model="m",
                            transport=transport)
    assert backend.complete(GenerationRequest(prompt="x")) == "ok"
    assert calls[0].headers["authorization"] == "Bearer from-env"


# --- gateway: cap, audit -----------------------------------------------------------

def test_fifo_cap_limits_concurrency():
    active = []
    max_active = []
    lock = threading.Lock()
    order = []

    class Slow:
        kind = "slow"

        def complete(self, request):
            with lock:
                active.append(request.request_id)
                order.append(request.request_id)
                max_active.append(len(active))
            time.sleep(0.05)
            with lock:
                active.remove(request.request_id)
            return "ok"

    gateway = LlmGateway(Slow(), in_flight_cap=2)
    threads = []
    for i in range(6):
        request = GenerationRequest(prompt="x", request_id=f"r{i}")
        thread = threading.Thread(target=gateway.complete, args=(request,))
        threads.append(thread)
        thread.start()
        time.sleep(0.01)  # stagger submissions so arrival order is defined
    for thread in threads:
        thread.join()
    assert max(max_active) <= 2
    assert order == [f"r{i}" for i in range(6)]  # FIFO admission


def test_audit_log_written_and_credential_free(tmp_path):
    audit = tmp_path / "audit.jsonl"
    body = {"choices": [{"message": {"content": "WeChat"}}]}
    transport, _ = counting_transport(lambda request: httpx.Response(200, json=body))
    backend = RemoteBackend(base_url="http://llm.example", model="m",
                            api_key="SECRET-TOKEN", transport=transport)
    gateway = LlmGateway(backend, audit_path=str(audit))
    gateway.complete(GenerationRequest(prompt="classify this", request_id="r1"))
    content = audit.read_text()
    entry = json.loads(content.strip())
    assert entry["request_id"] == "r1"
    assert entry["response"] == "WeChat"
    assert "SECRET-TOKEN" not in content


def test_gateway_classify_ood_audits_mode_and_hash(tmp_path):
    audit = tmp_path / "audit.jsonl"
    gateway = LlmGateway(MockOracleBackend({"pkt-1": "Weibo"}),
                         audit_path=str(audit))
    sample, record = make_sample("pkt-1")
    prediction = gateway.classify_ood(sample, record, SpsMode.STRICT, SPACE)
    assert prediction.label == "Weibo"
    entry = json.loads(audit.read_text().strip())
    assert entry["mode"] == "strict"
    assert len(entry["template_hash"]) == 64
