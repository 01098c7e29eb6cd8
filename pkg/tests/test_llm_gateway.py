import json

import pytest
import responses

from connectors.llm.connector import LLMConnector
from core.exceptions import BudgetExceeded, ReplayMiss, SchemaViolation, TransportError
from core.llm_gateway import LLMGateway, parse_reply
from models.replay_store import ReplayStore

BASE_URL = "https://llm.test/v1"
COMPLETIONS = f"{BASE_URL}/chat/completions"
SCHEMA = {
    "type": "object",
    "required": ["answer"],
    "properties": {"answer": {"type": "integer"}},
}


def connector(**overrides):
    config = {
        "service_id": "llm",
        "url": BASE_URL,
        "api_key": "test-key",
        "model": "test-model",
        "timeout": 5,
        "max_retries": 2,
        "retry_delay": 0,
    }
    config.update(overrides)
    return LLMConnector(config)


def completion(content, tokens=5):
    return {"choices": [{"message": {"content": content}}], "usage": {"total_tokens": tokens}}


@responses.activate
def test_record_then_replay(tmp_path):
    responses.add(responses.POST, COMPLETIONS, json=completion('{"answer": 42}'))
    fixtures = str(tmp_path / "fixtures")

    recorder = LLMGateway(connector(), ReplayStore(mode="record", fixtures_path=fixtures))
    request = recorder.request("What is the answer?", SCHEMA)
    assert recorder.complete_structured(request) == {"answer": 42}
    assert recorder.complete_structured(request) == {"answer": 42}
    assert len(responses.calls) == 1
    assert len(recorder.default_store.list_fingerprints()) == 1

    replayer = LLMGateway(None, ReplayStore(mode="replay", fixtures_path=fixtures))
    assert replayer.complete_structured(replayer.request("What is the answer?", SCHEMA)) == {"answer": 42}
    with pytest.raises(ReplayMiss):
        replayer.complete_structured(replayer.request("A different question", SCHEMA))
    assert len(responses.calls) == 1


@responses.activate
def test_live_request_payload(tmp_path):
    responses.add(responses.POST, COMPLETIONS, json=completion('{"answer": 1}'))
    gateway = LLMGateway(connector(), ReplayStore(mode="live", fixtures_path=str(tmp_path)))

    gateway.complete_structured(gateway.request("Count", SCHEMA, temperature=0.2))

    sent = json.loads(responses.calls[0].request.body)
    assert sent["model"] == "test-model"
    assert sent["temperature"] == 0.2
    assert sent["messages"][0]["role"] == "system"
    assert sent["messages"][1]["content"].startswith("Count")
    assert responses.calls[0].request.headers["Authorization"] == "Bearer test-key"
    assert not (tmp_path / "fixtures").exists()


@responses.activate
def test_schema_repair_retry(tmp_path):
    responses.add(responses.POST, COMPLETIONS, json=completion('{"answer": "many"}'))
    responses.add(responses.POST, COMPLETIONS, json=completion('```json\n{"answer": 3}\n```'))
    gateway = LLMGateway(connector(), ReplayStore(mode="live", fixtures_path=str(tmp_path)))

    reply = gateway.complete_structured(gateway.request("Count", SCHEMA, max_retries=2))

    assert reply == {"answer": 3}
    assert len(responses.calls) == 2
    retry_prompt = json.loads(responses.calls[1].request.body)["messages"][1]["content"]
    assert "rejected" in retry_prompt


@responses.activate
def test_semantic_validator_shares_retry_budget(tmp_path):
    responses.add(responses.POST, COMPLETIONS, json=completion('{"answer": -1}'))
    gateway = LLMGateway(connector(), ReplayStore(mode="live", fixtures_path=str(tmp_path)))

    def positive(reply):
        if reply["answer"] < 0:
            raise ValueError("answer must be positive")

    with pytest.raises(SchemaViolation) as excinfo:
        gateway.complete_structured(gateway.request("Count", SCHEMA, max_retries=1), validator=positive)
    assert excinfo.value.attempts == 2
    assert "positive" in excinfo.value.last_error
    assert len(responses.calls) == 2


@responses.activate
def test_budget_exceeded(tmp_path):
    responses.add(responses.POST, COMPLETIONS, json=completion('{"answer": 1}', tokens=500))
    gateway = LLMGateway(connector(), ReplayStore(mode="live", fixtures_path=str(tmp_path)))

    with pytest.raises(BudgetExceeded):
        gateway.complete_structured(gateway.request("Count", SCHEMA, budget_tokens=100))


@responses.activate
def test_transport_failure_after_retries(tmp_path):
    responses.add(responses.POST, COMPLETIONS, status=500)
    gateway = LLMGateway(connector(), ReplayStore(mode="live", fixtures_path=str(tmp_path)))

    with pytest.raises(TransportError):
        gateway.complete_structured(gateway.request("Count", SCHEMA))
    assert len(responses.calls) == 2


@responses.activate
def test_rate_limit_is_retried(tmp_path):
    responses.add(responses.POST, COMPLETIONS, status=429, headers={"Retry-After": "0"})
    responses.add(responses.POST, COMPLETIONS, json=completion('{"answer": 7}'))
    gateway = LLMGateway(connector(), ReplayStore(mode="live", fixtures_path=str(tmp_path)))

    assert gateway.complete_structured(gateway.request("Count", SCHEMA)) == {"answer": 7}
    assert len(responses.calls) == 2


def test_unconfigured_connector_raises_transport_error():
    with pytest.raises(TransportError):
        connector(api_key=None).query({"prompt": "hello"})


def test_invalid_recorded_reply(tmp_path):
    store = ReplayStore(mode="replay", fixtures_path=str(tmp_path))
    gateway = LLMGateway(None, store)
    request = gateway.request("Count", SCHEMA)
    fingerprint = store.generate_fingerprint(request.prompt, request.response_schema)
    store.save(fingerprint, request.prompt, request.response_schema, {"answer": "lots"})

    with pytest.raises(SchemaViolation) as excinfo:
        gateway.complete_structured(request)
    assert excinfo.value.attempts == 0


def test_fingerprint_ignores_schema_key_order(tmp_path):
    store = ReplayStore(mode="replay", fixtures_path=str(tmp_path))
    reordered = {"properties": SCHEMA["properties"], "required": ["answer"], "type": "object"}

    assert store.generate_fingerprint("p", SCHEMA) == store.generate_fingerprint("p", reordered)
    assert store.generate_fingerprint("p", SCHEMA) != store.generate_fingerprint("q", SCHEMA)


def test_parse_reply():
    assert parse_reply('```json\n{"a": 1}\n```') == {"a": 1}
    assert parse_reply(' {"a": 2} ') == {"a": 2}
    with pytest.raises(ValueError):
        parse_reply("[1, 2]")
