"""
Planning Model

Formal specifications (domain/problem), the grounded propositional task the
search runs on, plans and validation verdicts.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.knowledge import ActionSchema, DomainElements, ObjectTypeHierarchy, PredicateSignature
from models.literal import GroundAtom, Literal, atom_to_text

SUPPORTED_REQUIREMENTS = ("negative-preconditions", "strips", "typing")


class DomainSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    requirements: Tuple[str, ...] = ("strips", "typing")
    type_hierarchy: ObjectTypeHierarchy = Field(default_factory=ObjectTypeHierarchy)
    predicates: Tuple[PredicateSignature, ...] = ()
    actions: Tuple[ActionSchema, ...] = ()

    @field_validator("name")
    @classmethod
    def _lower(cls, value: str) -> str:
        return value.strip().lower()

    @field_validator("requirements")
    @classmethod
    def _sorted_requirements(cls, value):
        return tuple(sorted(set(r.lstrip(":").lower() for r in value)))

    @field_validator("predicates", "actions")
    @classmethod
    def _sort_by_name(cls, value):
        return tuple(sorted(value, key=lambda element: element.name))

    @classmethod
    def from_elements(cls, name: str, elements: DomainElements) -> "DomainSpec":
        requirements = ["strips", "typing"]
        if any(lit.negated for action in elements.actions for lit in action.preconditions):
            requirements.append("negative-preconditions")
        return cls(
            name=name,
            requirements=tuple(requirements),
            type_hierarchy=elements.object_types,
            predicates=elements.predicates,
            actions=elements.actions,
        )

    def to_elements(self) -> DomainElements:
        return DomainElements(
            object_types=self.type_hierarchy,
            predicates=self.predicates,
            actions=self.actions,
        )

    def predicate(self, name: str) -> Optional[PredicateSignature]:
        return next((p for p in self.predicates if p.name == name), None)

    def action(self, name: str) -> Optional[ActionSchema]:
        return next((a for a in self.actions if a.name == name), None)


class ProblemSpec(BaseModel):
    """
    Problem instance with the goal conjunction partitioned per agent:
    one robot partition plus one partition per human.
    """

    model_config = ConfigDict(frozen=True)

    name: str
    domain_name: str
    objects: Dict[str, str] = Field(default_factory=dict)
    init: FrozenSet[Literal] = frozenset()
    robot_id: Optional[str] = None
    goals: Dict[str, FrozenSet[Literal]] = Field(default_factory=dict)

    @model_validator(mode="before")
    @classmethod
    def _robot_partition(cls, data):
        if isinstance(data, dict) and data.get("robot_id"):
            goals = dict(data.get("goals") or {})
            goals.setdefault(data["robot_id"], frozenset())
            data = {**data, "goals": goals}
        return data

    def __hash__(self) -> int:
        return hash((self.name, self.domain_name))

    @property
    def human_ids(self) -> List[str]:
        return sorted(agent for agent in self.goals if agent != self.robot_id)

    def partition_order(self) -> List[str]:
        ordered = [self.robot_id] if self.robot_id in self.goals else []
        return ordered + self.human_ids

    def goal_literals(self) -> FrozenSet[Literal]:
        return frozenset(lit for partition in self.goals.values() for lit in partition)


@dataclass(frozen=True)
class GroundAction:
    agent: str
    schema_name: str
    args: Tuple[str, ...]
    pre: FrozenSet[int]
    add: FrozenSet[int]
    delete: FrozenSet[int]
    pre_neg: FrozenSet[int] = frozenset()
    cost: int = 1
    pre_mask: int = field(default=0, compare=False, repr=False)
    neg_mask: int = field(default=0, compare=False, repr=False)
    add_mask: int = field(default=0, compare=False, repr=False)
    del_mask: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "pre_mask", _mask(self.pre))
        object.__setattr__(self, "neg_mask", _mask(self.pre_neg))
        object.__setattr__(self, "add_mask", _mask(self.add))
        object.__setattr__(self, "del_mask", _mask(self.delete))

    @property
    def key(self) -> Tuple[str, ...]:
        return (self.schema_name,) + self.args

    def __str__(self) -> str:
        return atom_to_text(self.key)


def _mask(indices) -> int:
    value = 0
    for index in indices:
        value |= 1 << index
    return value


@dataclass(frozen=True)
class GroundedTask:
    atoms: Tuple[GroundAtom, ...]
    init: int
    goal: FrozenSet[int]
    actions: Tuple[GroundAction, ...]
    robot_id: Optional[str] = None
    atom_index: Dict[GroundAtom, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.atom_index:
            object.__setattr__(self, "atom_index", {atom: i for i, atom in enumerate(self.atoms)})

    @property
    def goal_mask(self) -> int:
        return _mask(self.goal)

    def init_atoms(self) -> FrozenSet[GroundAtom]:
        return frozenset(self.atoms[i] for i in range(len(self.atoms)) if self.init >> i & 1)

    def find_action(self, schema_name: str, args: Tuple[str, ...]) -> Optional[GroundAction]:
        key = (schema_name,) + tuple(args)
        return next((action for action in self.actions if action.key == key), None)


class PlanStep(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    agent: str
    schema_name: str
    args: Tuple[str, ...] = ()

    def __str__(self) -> str:
        return atom_to_text((self.schema_name,) + self.args)


class Plan(BaseModel):
    model_config = ConfigDict(frozen=True)

    steps: Tuple[PlanStep, ...] = ()
    metadata: Dict[str, Any] = Field(default_factory=dict)

    def __hash__(self) -> int:
        return hash(self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    def steps_for(self, agent_id: str) -> List[PlanStep]:
        return [step for step in self.steps if step.agent == agent_id]


class SearchStrategy(str, Enum):
    UNIFORM_COST = "uniform_cost"
    ASTAR_GOALCOUNT = "astar_goalcount"
    GBFS_HADD = "gbfs_hadd"


class SearchConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    strategy: SearchStrategy = SearchStrategy.UNIFORM_COST
    max_expansions: int = Field(default=1_000_000, gt=0)
    seed: int = 0


class VerdictStatus(str, Enum):
    VALID = "valid"
    INVALID = "invalid"
    GOAL_UNMET = "goal_unmet"


class Verdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    status: VerdictStatus
    step: Optional[int] = None
    missing: Optional[str] = None
    unmet: Tuple[str, ...] = ()

    @property
    def is_valid(self) -> bool:
        return self.status == VerdictStatus.VALID
