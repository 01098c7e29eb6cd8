"""
Knowledge base loading and domain-element extraction.

The knowledge document (schemas/knowledge.schema.json) carries the structured
domain (types, predicates, action schemas), narrative passages for LLM
extraction, the category -> goal template table and per-kind action
allow-lists.
"""

from abc import ABC, abstractmethod
from pathlib import Path
from string import Template
from typing import Any, Dict, List
import logging

from core.documents import Document, load_document
from core.exceptions import (
    EmptySource,
    ExtractionInvalid,
    InvalidDomain,
    SchemaViolation,
    TypeCycle,
    UndeclaredPredicate,
    UnknownDomain,
)
from models.knowledge import (
    REQUIRED_TYPES,
    ROOT_TYPE,
    ActionSchema,
    DomainElements,
    KnowledgeBase,
    KnowledgeBundle,
    ObjectTypeHierarchy,
    PredicateSignature,
    TypedParam,
)
from models.literal import Literal

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

PROMPT_DIR = Path(__file__).resolve().parent.parent / "prompts"
EXTRACT_PROMPT = "extract_domain.v1.txt"
RESERVED_TYPE_NAMES = ("robot", "human")

PARAM_SCHEMA = {
    "type": "object",
    "required": ["name", "type"],
    "properties": {"name": {"type": "string"}, "type": {"type": "string"}},
}

ELEMENTS_SCHEMA = {
    "type": "object",
    "required": ["predicates", "actions"],
    "properties": {
        "types": {"type": "object", "additionalProperties": {"type": "string"}},
        "predicates": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "params"],
                "properties": {"name": {"type": "string"}, "params": {"type": "array", "items": PARAM_SCHEMA}},
            },
        },
        "actions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "params", "pre", "add", "del"],
                "properties": {
                    "name": {"type": "string"},
                    "params": {"type": "array", "items": PARAM_SCHEMA},
                    "pre": {"type": "array", "items": {"type": "string"}},
                    "add": {"type": "array", "items": {"type": "string"}},
                    "del": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
    },
}


def load_prompt(name: str) -> Template:
    return Template((PROMPT_DIR / name).read_text(encoding="utf-8"))


def _params(raw: List[Dict[str, str]]) -> tuple:
    return tuple(TypedParam(name=p["name"], type=p["type"]) for p in raw)


def _literals(raw: List[str], label: str) -> frozenset:
    literals = []
    for text in raw:
        try:
            literals.append(Literal.parse(text))
        except ValueError as e:
            raise InvalidDomain(f"{label}: {str(e)}")
    return frozenset(literals)


def elements_from_dict(data: Dict[str, Any]) -> DomainElements:
    """
    Build DomainElements from the structured part of a knowledge document
    (or an LLM reply of the same shape). Not validated; see validate_domain_elements.
    """
    types = {name.lower(): parent.lower() for name, parent in data.get("types", {}).items()}
    predicates = tuple(
        PredicateSignature(name=p["name"], params=_params(p.get("params", [])))
        for p in data.get("predicates", [])
    )
    actions = tuple(
        ActionSchema(
            name=a["name"],
            params=_params(a.get("params", [])),
            preconditions=_literals(a.get("pre", []), f"action {a['name']} pre"),
            add_effects=_literals(a.get("add", []), f"action {a['name']} add"),
            del_effects=_literals(a.get("del", []), f"action {a['name']} del"),
        )
        for a in data.get("actions", [])
    )
    return DomainElements(object_types=ObjectTypeHierarchy(parent=types), predicates=predicates, actions=actions)


def elements_to_dict(elements: DomainElements) -> Dict[str, Any]:
    return {
        "types": dict(sorted(elements.object_types.parent.items())),
        "predicates": [
            {"name": p.name, "params": [{"name": q.name, "type": q.type} for q in p.params]}
            for p in elements.predicates
        ],
        "actions": [
            {
                "name": a.name,
                "params": [{"name": q.name, "type": q.type} for q in a.params],
                "pre": sorted(str(lit) for lit in a.preconditions),
                "add": sorted(str(lit) for lit in a.add_effects),
                "del": sorted(str(lit) for lit in a.del_effects),
            }
            for a in elements.actions
        ],
    }


def check_type_hierarchy(hierarchy: ObjectTypeHierarchy) -> None:
    """
    Raises:
        TypeCycle: a type is its own (transitive) supertype
        InvalidDomain: reserved or missing type names
    """
    for type_name in hierarchy.parent:
        seen = {type_name}
        current = type_name
        while current in hierarchy.parent:
            current = hierarchy.parent[current]
            if current in seen:
                raise TypeCycle(f"Type hierarchy contains a cycle through '{type_name}'")
            seen.add(current)
        if current != ROOT_TYPE:
            raise InvalidDomain(f"Type '{type_name}' descends from undeclared type '{current}'")

    for reserved in RESERVED_TYPE_NAMES:
        if reserved in hierarchy.parent:
            raise InvalidDomain(f"'{reserved}' is an agent instance, not a type")
    missing = [t for t in REQUIRED_TYPES if t not in hierarchy.parent]
    if missing:
        raise InvalidDomain(f"Type hierarchy is missing required types: {', '.join(missing)}")


def _check_literal(literal: Literal, action: ActionSchema, elements: DomainElements,
                   hierarchy: ObjectTypeHierarchy) -> None:
    signature = elements.predicate(literal.predicate)
    if signature is None:
        raise UndeclaredPredicate(
            f"Action '{action.name}' uses undeclared predicate '{literal.predicate}'"
        )
    if len(literal.args) != signature.arity:
        raise InvalidDomain(
            f"Action '{action.name}': {literal} has arity {len(literal.args)}, "
            f"'{signature.name}' expects {signature.arity}"
        )
    for arg, expected in zip(literal.args, signature.params):
        arg_type = action.param_type(arg)
        if arg_type is None:
            raise InvalidDomain(f"Action '{action.name}': unbound variable {arg} in {literal}")
        if not hierarchy.is_subtype(arg_type, expected.type):
            raise InvalidDomain(
                f"Action '{action.name}': {arg} of type {arg_type} does not fit {expected.type} in {literal}"
            )


def validate_domain_elements(elements: DomainElements) -> DomainElements:
    """
    Enforce the ActionSchema / PredicateSignature invariants.

    Args:
        elements: Candidate domain elements

    Returns:
        The same elements when valid

    Raises:
        TypeCycle, UndeclaredPredicate, InvalidDomain
    """
    hierarchy = elements.object_types
    check_type_hierarchy(hierarchy)

    seen_predicates = set()
    for predicate in elements.predicates:
        if predicate.name in seen_predicates:
            raise InvalidDomain(f"Duplicate predicate '{predicate.name}'")
        seen_predicates.add(predicate.name)
        for param in predicate.params:
            if not hierarchy.has_type(param.type):
                raise InvalidDomain(f"Predicate '{predicate.name}' uses unknown type '{param.type}'")

    seen_actions = set()
    for action in elements.actions:
        if action.name in seen_actions:
            raise InvalidDomain(f"Duplicate action '{action.name}'")
        seen_actions.add(action.name)

        names = [p.name for p in action.params]
        if len(set(names)) != len(names):
            raise InvalidDomain(f"Action '{action.name}' repeats a parameter name")
        for param in action.params:
            if not param.name.startswith("?"):
                raise InvalidDomain(f"Action '{action.name}': parameter {param.name} must start with '?'")
            if not hierarchy.has_type(param.type):
                raise InvalidDomain(f"Action '{action.name}' uses unknown type '{param.type}'")
        agent_params = [p for p in action.params if hierarchy.is_subtype(p.type, "agent")]
        if len(agent_params) != 1:
            raise InvalidDomain(
                f"Action '{action.name}' must have exactly one agent parameter, has {len(agent_params)}"
            )

        for literal in action.preconditions | action.add_effects | action.del_effects:
            _check_literal(literal, action, elements, hierarchy)
        if any(lit.negated for lit in action.add_effects | action.del_effects):
            raise InvalidDomain(f"Action '{action.name}': effects must be positive literals")
        overlap = action.add_effects & action.del_effects
        if overlap:
            raise InvalidDomain(
                f"Action '{action.name}' adds and deletes {', '.join(sorted(map(str, overlap)))}"
            )

    return elements


def load_knowledge(document: Document) -> KnowledgeBase:
    """
    Load a knowledge document.

    Args:
        document: JSON text or decoded dict

    Returns:
        KnowledgeBase with a validated structured section

    Raises:
        SchemaError, UndeclaredPredicate, TypeCycle, InvalidDomain
    """
    data = load_document(document, "knowledge", "knowledge base")
    structured = elements_from_dict(data)
    if not structured.is_empty:
        validate_domain_elements(structured)

    narrative = {}
    for topic, passages in data.get("narrative", {}).items():
        narrative[topic] = (passages,) if isinstance(passages, str) else tuple(passages)

    kb = KnowledgeBase(
        domain_name=data["domain"].lower(),
        structured=structured,
        narrative=narrative,
        goal_templates={k.lower(): v for k, v in data.get("goal_templates", {}).items()},
        agent_actions={k: tuple(a.lower() for a in v) for k, v in data.get("agent_actions", {}).items()},
    )
    logger.info(
        f"Loaded knowledge for '{kb.domain_name}': {len(structured.predicates)} predicates, "
        f"{len(structured.actions)} actions, {len(narrative)} narrative topics"
    )
    return kb


def get_knowledge(kb: KnowledgeBase, domain_name: str) -> KnowledgeBundle:
    """
    Structured and narrative knowledge for one domain.

    Raises:
        UnknownDomain
    """
    if domain_name.lower() != kb.domain_name:
        raise UnknownDomain(f"Knowledge base holds '{kb.domain_name}', not '{domain_name}'")
    return KnowledgeBundle(domain_name=kb.domain_name, structured=kb.structured, narrative=dict(kb.narrative))


class ElementExtractor(ABC):
    """Turns a knowledge bundle into validated domain elements."""

    name = "abstract"

    @abstractmethod
    def extract(self, bundle: KnowledgeBundle) -> DomainElements:
        pass


class PassthroughExtractor(ElementExtractor):
    """Identity on the structured section."""

    name = "passthrough"

    def extract(self, bundle: KnowledgeBundle) -> DomainElements:
        if bundle.structured.is_empty:
            raise EmptySource(f"Knowledge for '{bundle.domain_name}' has no structured section")
        return validate_domain_elements(bundle.structured)


class LLMExtractor(ElementExtractor):
    """Asks the LLM for types, predicates and action schemas from narrative text."""

    name = "llm"

    def __init__(self, gateway, store=None, temperature: float = 0.0, max_retries: int = None):
        self.gateway = gateway
        self.store = store
        self.temperature = temperature
        self.max_retries = max_retries

    def build_prompt(self, bundle: KnowledgeBundle) -> str:
        return load_prompt(EXTRACT_PROMPT).substitute(
            domain=bundle.domain_name,
            narrative=bundle.narrative_text(),
            required_types=", ".join(REQUIRED_TYPES),
        )

    def extract(self, bundle: KnowledgeBundle) -> DomainElements:
        if not bundle.narrative:
            raise EmptySource(f"Knowledge for '{bundle.domain_name}' has no narrative section")

        def semantic_check(reply: Dict[str, Any]) -> None:
            try:
                validate_domain_elements(elements_from_dict(reply))
            except (InvalidDomain, UndeclaredPredicate, TypeCycle) as e:
                raise ValueError(str(e))

        request = self.gateway.request(
            prompt=self.build_prompt(bundle),
            response_schema=ELEMENTS_SCHEMA,
            temperature=self.temperature,
            max_retries=self.max_retries,
        )
        try:
            reply = self.gateway.complete_structured(request, self.store, validator=semantic_check)
        except SchemaViolation as e:
            raise ExtractionInvalid(f"LLM extraction for '{bundle.domain_name}' failed validation: {e.last_error}")
        elements = validate_domain_elements(elements_from_dict(reply))
        logger.info(
            f"Extracted {len(elements.predicates)} predicates and {len(elements.actions)} actions via LLM"
        )
        return elements


def resolve_extractor(extractor, gateway=None, store=None) -> ElementExtractor:
    if isinstance(extractor, ElementExtractor):
        return extractor
    if extractor == "passthrough":
        return PassthroughExtractor()
    if extractor == "llm":
        if gateway is None:
            raise ValueError("The llm extractor requires an LLM gateway")
        return LLMExtractor(gateway, store)
    raise ValueError(f"Unknown extractor: {extractor}")


def extract_domain_elements(bundle: KnowledgeBundle, extractor, gateway=None, store=None) -> DomainElements:
    """
    Extract object types, predicates and actions from a knowledge bundle.

    Args:
        bundle: Result of get_knowledge
        extractor: "passthrough", "llm" or an ElementExtractor instance
        gateway: LLMGateway, required for "llm"
        store: ReplayStore used by the gateway

    Returns:
        Validated DomainElements

    Raises:
        EmptySource, ExtractionInvalid
    """
    return resolve_extractor(extractor, gateway, store).extract(bundle)


def check_affordances(items, elements: DomainElements) -> List[str]:
    """Affordance labels on scene items that name no action schema."""
    known = {action.name for action in elements.actions}
    missing = []
    for item in items:
        for label in item.affordable_actions:
            if label.lower() not in known:
                missing.append(f"unknown affordance: {item.id}, {label}")
    return missing


def check_agent_actions(kb: KnowledgeBase) -> List[str]:
    """
    Allow-list entries that the structured section does not back up: the
    action is undeclared, or its agent parameter is not restricted by the
    matching kind predicate.
    """
    kind_predicates = {"robot": "is-robot", "human": "is-human"}
    problems = []
    for kind, names in sorted(kb.agent_actions.items()):
        predicate = kind_predicates.get(kind)
        if predicate is None:
            problems.append(f"unknown agent kind in allow-list: {kind}")
            continue
        for name in names:
            action = kb.structured.action(name)
            if action is None:
                problems.append(f"allow-listed action is undeclared: {kind}, {name}")
                continue
            agent = action.agent_param(kb.structured.object_types)
            guard = Literal(predicate=predicate, args=(agent.name,)) if agent else None
            if guard is None or guard not in action.preconditions:
                problems.append(f"allow-listed action lacks ({predicate} ...): {kind}, {name}")
    return problems
