"""
Knowledge Model

Object types, predicate signatures and action schemas, held both as
structured elements and as narrative passages for LLM extraction.
"""

from typing import Dict, FrozenSet, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from models.literal import Literal

ROOT_TYPE = "object"
REQUIRED_TYPES = ("agent", "room", "item")


class TypedParam(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    type: str

    @field_validator("name", "type")
    @classmethod
    def _lower(cls, value: str) -> str:
        return value.strip().lower()


class ObjectTypeHierarchy(BaseModel):
    """Type name -> supertype. Roots map to the built-in "object"."""

    model_config = ConfigDict(frozen=True)

    parent: Dict[str, str] = Field(default_factory=dict)

    def __hash__(self) -> int:
        return hash(tuple(sorted(self.parent.items())))

    @property
    def types(self) -> List[str]:
        return sorted(self.parent)

    def has_type(self, type_name: str) -> bool:
        return type_name == ROOT_TYPE or type_name in self.parent

    def ancestors(self, type_name: str) -> List[str]:
        """The type itself followed by its supertypes up to "object"."""
        chain = [type_name]
        seen = {type_name}
        current = type_name
        while current in self.parent:
            current = self.parent[current]
            if current in seen:
                break
            chain.append(current)
            seen.add(current)
        if chain[-1] != ROOT_TYPE:
            chain.append(ROOT_TYPE)
        return chain

    def is_subtype(self, type_name: str, super_name: str) -> bool:
        return super_name in self.ancestors(type_name)


class PredicateSignature(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    params: Tuple[TypedParam, ...] = ()

    @field_validator("name")
    @classmethod
    def _lower(cls, value: str) -> str:
        return value.strip().lower()

    @property
    def arity(self) -> int:
        return len(self.params)


class ActionSchema(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    params: Tuple[TypedParam, ...] = ()
    preconditions: FrozenSet[Literal] = frozenset()
    add_effects: FrozenSet[Literal] = frozenset()
    del_effects: FrozenSet[Literal] = frozenset()

    @field_validator("name")
    @classmethod
    def _lower(cls, value: str) -> str:
        return value.strip().lower()

    def agent_param(self, hierarchy: ObjectTypeHierarchy) -> Optional[TypedParam]:
        agents = [p for p in self.params if hierarchy.is_subtype(p.type, "agent")]
        return agents[0] if len(agents) == 1 else None

    def param_type(self, name: str) -> Optional[str]:
        return next((p.type for p in self.params if p.name == name), None)


class DomainElements(BaseModel):
    """Object types, predicates and actions extracted from a knowledge bundle."""

    model_config = ConfigDict(frozen=True)

    object_types: ObjectTypeHierarchy = Field(default_factory=ObjectTypeHierarchy)
    predicates: Tuple[PredicateSignature, ...] = ()
    actions: Tuple[ActionSchema, ...] = ()

    @field_validator("predicates", "actions")
    @classmethod
    def _sort_by_name(cls, value):
        return tuple(sorted(value, key=lambda element: element.name))

    @property
    def is_empty(self) -> bool:
        return not self.object_types.parent and not self.predicates and not self.actions

    def predicate(self, name: str) -> Optional[PredicateSignature]:
        return next((p for p in self.predicates if p.name == name), None)

    def action(self, name: str) -> Optional[ActionSchema]:
        return next((a for a in self.actions if a.name == name), None)

    def extended(self, predicates: List[PredicateSignature],
                 actions: List[ActionSchema]) -> "DomainElements":
        """Append new elements; an element with an existing name replaces it."""
        merged_predicates = {p.name: p for p in self.predicates}
        merged_predicates.update({p.name: p for p in predicates})
        merged_actions = {a.name: a for a in self.actions}
        merged_actions.update({a.name: a for a in actions})
        return DomainElements(
            object_types=self.object_types,
            predicates=tuple(merged_predicates.values()),
            actions=tuple(merged_actions.values()),
        )


class KnowledgeBundle(BaseModel):
    """What get_knowledge hands to an extractor for one domain."""

    model_config = ConfigDict(frozen=True)

    domain_name: str
    structured: DomainElements = Field(default_factory=DomainElements)
    narrative: Dict[str, Tuple[str, ...]] = Field(default_factory=dict)

    def __hash__(self) -> int:
        return hash(self.domain_name)

    def narrative_text(self) -> str:
        sections = []
        for topic in sorted(self.narrative):
            sections.append(f"[{topic}]\n" + "\n".join(self.narrative[topic]))
        return "\n\n".join(sections)


class KnowledgeBase(BaseModel):
    model_config = ConfigDict(frozen=True)

    domain_name: str
    structured: DomainElements = Field(default_factory=DomainElements)
    narrative: Dict[str, Tuple[str, ...]] = Field(default_factory=dict)
    goal_templates: Dict[str, str] = Field(default_factory=dict)
    agent_actions: Dict[str, Tuple[str, ...]] = Field(default_factory=dict)

    def __hash__(self) -> int:
        return hash(self.domain_name)
