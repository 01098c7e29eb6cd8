from typing import Dict, FrozenSet, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.literal import GroundAtom, atom_to_text


class AgendaEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: int = Field(ge=1)
    activity: str
    target: str
    relation: str = "using"


class Agenda(BaseModel):
    """Open-loop script of one human: timestep -> (activity, target item)."""

    model_config = ConfigDict(frozen=True)

    human_id: str
    script: Tuple[AgendaEntry, ...] = ()

    @model_validator(mode="after")
    def _strictly_increasing(self) -> "Agenda":
        timesteps = [entry.t for entry in self.script]
        if any(b <= a for a, b in zip(timesteps, timesteps[1:])):
            raise ValueError(f"Agenda timesteps for {self.human_id} must be strictly increasing")
        return self

    def entry_at(self, t: int) -> Optional[AgendaEntry]:
        return next((entry for entry in self.script if entry.t == t), None)

    def next_after(self, t: int) -> Optional[AgendaEntry]:
        return next((entry for entry in self.script if entry.t > t), None)


class Activity(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    target: Optional[str] = None
    relation: str = "using"


class WorldState(BaseModel):
    """
    Household state at one timestep: the true facts over the domain's
    predicates plus each human's scripted activity. Locations are views
    over the at-agent / at / holding facts.
    """

    model_config = ConfigDict(frozen=True)

    timestep: int = 0
    facts: FrozenSet[GroundAtom] = frozenset()
    activities: Dict[str, Optional[Activity]] = Field(default_factory=dict)

    def __hash__(self) -> int:
        return hash((self.timestep, self.facts))

    @property
    def agent_locations(self) -> Dict[str, str]:
        return {fact[1]: fact[2] for fact in self.facts if fact[0] == "at-agent" and len(fact) == 3}

    @property
    def item_locations(self) -> Dict[str, str]:
        return {fact[1]: fact[2] for fact in self.facts if fact[0] == "at" and len(fact) == 3}

    @property
    def holdings(self) -> Dict[str, List[str]]:
        held: Dict[str, List[str]] = {}
        for fact in sorted(self.facts):
            if fact[0] == "holding" and len(fact) == 3:
                held.setdefault(fact[1], []).append(fact[2])
        return held

    def sorted_facts(self) -> List[str]:
        return [atom_to_text(fact) for fact in sorted(self.facts)]


class JointAction(BaseModel):
    model_config = ConfigDict(frozen=True)

    robot: Optional[Tuple[str, ...]] = None
    humans: Dict[str, Optional[Activity]] = Field(default_factory=dict)
    fault: Optional[str] = None

    def __hash__(self) -> int:
        return hash((self.robot, self.fault))


class TraceRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    state: WorldState
    action: JointAction


class Trace(BaseModel):
    model_config = ConfigDict(frozen=True)

    robot_id: str
    records: Tuple[TraceRecord, ...] = ()
    final_state: WorldState
    agendas: Tuple[Agenda, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def post_states(self) -> List[WorldState]:
        """State reached after each recorded step."""
        states = [record.state for record in self.records[1:]]
        if self.records:
            states.append(self.final_state)
        return states

    @property
    def faults(self) -> List[str]:
        return [record.action.fault for record in self.records if record.action.fault]


class DisturbanceReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    co_occupancy_steps: int = Field(ge=0)
    item_conflicts: int = Field(ge=0)
    steps: int = Field(ge=0)
    faulted_steps: int = Field(default=0, ge=0)
