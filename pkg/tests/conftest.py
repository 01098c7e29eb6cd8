import json
from pathlib import Path

import pytest

from core.base_connector import BaseConnector
from core.documents import read_text
from core.knowledge_base import load_knowledge
from core.llm_gateway import LLMGateway
from core.scene_graph import load_snapshot_sequence
from models.planning import DomainSpec
from models.replay_store import ReplayStore

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def data_path(*parts) -> str:
    return str(DATA_DIR.joinpath(*parts))


@pytest.fixture(scope="session")
def household_kb():
    return load_knowledge(read_text(data_path("household.kb.json")))


@pytest.fixture(scope="session")
def household_domain(household_kb):
    return DomainSpec.from_elements(household_kb.domain_name, household_kb.structured)


@pytest.fixture
def load_scene():
    def _load(name):
        return load_snapshot_sequence(read_text(data_path("scenes", f"{name}.json")))
    return _load


def scene_document(rooms=None, items=None, agents=None, edges=None, timestep=1, graph_id="house"):
    """Small valid scene graph dict; callers override layers as needed."""
    return {
        "graph_id": graph_id,
        "timestep": timestep,
        "floors": [{"id": "f1"}],
        "rooms": rooms if rooms is not None else [
            {"id": "a", "parent_floor": "f1", "neighbors": ["b"]},
            {"id": "b", "parent_floor": "f1", "neighbors": ["a"]},
        ],
        "items": items if items is not None else [],
        "agents": agents if agents is not None else [{"id": "r1", "kind": "robot", "parent_room": "a"}],
        "edges": edges if edges is not None else [],
    }


class FakeLLMConnector(BaseConnector):
    """Returns scripted replies in order; repeats the last one when exhausted."""

    def __init__(self, replies, tokens_per_reply=10):
        super().__init__({"service_id": "fake-llm", "model": "fake"})
        self.replies = list(replies)
        self.tokens_per_reply = tokens_per_reply
        self.prompts = []

    def connect(self):
        self.connected = True
        return True

    def disconnect(self):
        self.connected = False
        return True

    def validate(self):
        return True

    def query(self, parameters):
        self.prompts.append(parameters["prompt"])
        index = min(len(self.prompts), len(self.replies)) - 1
        reply = self.replies[index]
        content = reply if isinstance(reply, str) else json.dumps(reply)
        return self.transform({"content": content, "usage": {"total_tokens": self.tokens_per_reply}})

    def transform(self, data):
        return {"content": data["content"], "usage": data["usage"]}


@pytest.fixture
def fake_gateway(tmp_path):
    def _build(replies, mode="live"):
        connector = FakeLLMConnector(replies)
        store = ReplayStore(mode=mode, fixtures_path=str(tmp_path / "fixtures"))
        return LLMGateway(connector, store), connector
    return _build


WATER_REPLY = {
    "predicates": [{"name": "watered", "params": [{"name": "?i", "type": "item"}]}],
    "actions": [{
        "name": "water",
        "params": [{"name": "?h", "type": "agent"}, {"name": "?i", "type": "item"}, {"name": "?r", "type": "room"}],
        "pre": ["(is-human ?h)", "(at-agent ?h ?r)", "(at ?i ?r)", "(not (robot-in ?r))"],
        "add": ["(watered ?i)", "(human-active-in ?r)"],
        "del": [],
    }],
}
