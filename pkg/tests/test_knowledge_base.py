import pytest

from core.exceptions import (
    EmptySource,
    ExtractionInvalid,
    InvalidDomain,
    SchemaError,
    TypeCycle,
    UndeclaredPredicate,
    UnknownDomain,
)
from core.knowledge_base import (
    LLMExtractor,
    check_affordances,
    check_agent_actions,
    elements_from_dict,
    elements_to_dict,
    extract_domain_elements,
    get_knowledge,
    load_knowledge,
    resolve_extractor,
)

BASE_TYPES = {"agent": "object", "room": "object", "item": "object"}


def domain_doc(**overrides):
    doc = {
        "domain": "toy",
        "types": dict(BASE_TYPES),
        "predicates": [
            {"name": "at-agent", "params": [{"name": "?a", "type": "agent"}, {"name": "?r", "type": "room"}]},
        ],
        "actions": [],
    }
    doc.update(overrides)
    return doc


def test_household_knowledge_loads(household_kb):
    assert household_kb.domain_name == "household"
    assert len(household_kb.structured.predicates) == 18
    assert len(household_kb.structured.actions) == 11
    assert household_kb.goal_templates["stove"] == "(cooked ?item)"
    assert household_kb.agent_actions["robot"] == ("goto", "pick", "drop")


def test_get_knowledge_unknown_domain(household_kb):
    bundle = get_knowledge(household_kb, "HOUSEHOLD")
    assert bundle.domain_name == "household"
    assert "movement" in bundle.narrative

    with pytest.raises(UnknownDomain):
        get_knowledge(household_kb, "warehouse")


def test_passthrough_returns_structured_section(household_kb):
    bundle = get_knowledge(household_kb, "household")
    assert extract_domain_elements(bundle, "passthrough") == household_kb.structured


def test_passthrough_without_structured_section():
    kb = load_knowledge({"domain": "toy", "narrative": {"movement": "Robots move."}})

    with pytest.raises(EmptySource):
        extract_domain_elements(get_knowledge(kb, "toy"), "passthrough")


def test_type_cycle_is_rejected():
    doc = domain_doc(types={"agent": "room", "room": "agent", "item": "object"}, predicates=[])
    with pytest.raises(TypeCycle):
        load_knowledge(doc)


def test_missing_and_reserved_types():
    with pytest.raises(InvalidDomain, match="required types"):
        load_knowledge(domain_doc(types={"agent": "object", "room": "object"}, predicates=[]))
    with pytest.raises(InvalidDomain, match="agent instance"):
        load_knowledge(domain_doc(types={**BASE_TYPES, "robot": "agent"}, predicates=[]))


def test_undeclared_predicate_in_action():
    doc = domain_doc(actions=[{
        "name": "fly",
        "params": [{"name": "?a", "type": "agent"}],
        "pre": ["(airborne ?a)"],
    }])
    with pytest.raises(UndeclaredPredicate):
        load_knowledge(doc)


def test_action_needs_exactly_one_agent_parameter():
    doc = domain_doc(actions=[{
        "name": "swap",
        "params": [{"name": "?a", "type": "agent"}, {"name": "?b", "type": "agent"}],
    }])
    with pytest.raises(InvalidDomain, match="exactly one agent"):
        load_knowledge(doc)


def test_negated_effects_are_rejected():
    doc = domain_doc(actions=[{
        "name": "leave",
        "params": [{"name": "?a", "type": "agent"}, {"name": "?r", "type": "room"}],
        "add": ["(not (at-agent ?a ?r))"],
    }])
    with pytest.raises(InvalidDomain, match="positive"):
        load_knowledge(doc)


def test_schema_violation_is_schema_error():
    with pytest.raises(SchemaError):
        load_knowledge({"types": BASE_TYPES})


def test_elements_dict_round_trip(household_kb):
    elements = household_kb.structured
    assert elements_from_dict(elements_to_dict(elements)) == elements


def test_llm_extractor_repairs_invalid_reply(household_kb, fake_gateway):
    valid = elements_to_dict(household_kb.structured)
    invalid = {**valid, "actions": valid["actions"] + [{
        "name": "teleport",
        "params": [{"name": "?a", "type": "agent"}],
        "pre": ["(beamed ?a)"],
        "add": [],
        "del": [],
    }]}
    gateway, connector = fake_gateway([invalid, valid])

    extractor = resolve_extractor("llm", gateway, gateway.default_store)
    elements = extractor.extract(get_knowledge(household_kb, "household"))

    assert elements == household_kb.structured
    assert len(connector.prompts) == 2
    assert "rejected" in connector.prompts[1]


def test_llm_extractor_gives_up(household_kb, fake_gateway):
    gateway, _ = fake_gateway([{"predicates": [], "actions": [], "types": {"agent": "object"}}])

    with pytest.raises(ExtractionInvalid):
        LLMExtractor(gateway, gateway.default_store, max_retries=1).extract(get_knowledge(household_kb, "household"))


def test_unknown_extractor():
    with pytest.raises(ValueError):
        resolve_extractor("magic")


def test_check_affordances(household_kb, load_scene):
    items = load_scene("allensville").latest.items
    assert check_affordances(items, household_kb.structured) == []

    odd = items[0].model_copy(update={"affordable_actions": ("fly",)})
    assert check_affordances([odd], household_kb.structured) == [f"unknown affordance: {odd.id}, fly"]


def test_check_agent_actions(household_kb):
    assert check_agent_actions(household_kb) == []

    odd = household_kb.model_copy(update={"agent_actions": {"robot": ("goto", "walk", "fly"), "pet": ("walk",)}})
    assert check_agent_actions(odd) == [
        "unknown agent kind in allow-list: pet",
        "allow-listed action lacks (is-robot ...): robot, walk",
        "allow-listed action is undeclared: robot, fly",
    ]
