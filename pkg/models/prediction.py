from typing import Any, Dict, FrozenSet, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from models.literal import Literal

PROBABILITY_TOLERANCE = 1e-9


class GoalCandidate(BaseModel):
    model_config = ConfigDict(frozen=True)

    human_id: str
    goal: FrozenSet[Literal]
    probability: float = Field(ge=0.0, le=1.0)
    rationale: Optional[str] = None
    covered: bool = True

    @field_validator("goal")
    @classmethod
    def _non_empty(cls, value):
        if not value:
            raise ValueError("goal must contain at least one literal")
        return value

    def canonical(self) -> str:
        """Sorted literal text, the tie-break key for goal selection."""
        return " ".join(sorted(str(literal) for literal in self.goal))


class GoalDistribution(BaseModel):
    model_config = ConfigDict(frozen=True)

    human_id: str
    candidates: Tuple[GoalCandidate, ...]

    @property
    def total(self) -> float:
        return sum(candidate.probability for candidate in self.candidates)

    @property
    def uncovered(self) -> Tuple[GoalCandidate, ...]:
        return tuple(c for c in self.candidates if not c.covered)

    def is_valid(self) -> bool:
        goals = [c.goal for c in self.candidates]
        return (
            len(self.candidates) >= 1
            and abs(self.total - 1.0) <= PROBABILITY_TOLERANCE
            and len(set(goals)) == len(goals)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "human_id": self.human_id,
            "candidates": [candidate_to_dict(c) for c in self.candidates],
        }


def candidate_to_dict(candidate: GoalCandidate) -> Dict[str, Any]:
    return {
        "goal": sorted(str(literal) for literal in candidate.goal),
        "probability": candidate.probability,
        "rationale": candidate.rationale,
        "covered": candidate.covered,
    }


class PredictionReport(BaseModel):
    """Everything transform decided about the humans: distributions, synthesis, selections."""

    model_config = ConfigDict(frozen=True)

    domain_name: str
    backend: str
    distributions: Dict[str, GoalDistribution] = Field(default_factory=dict)
    selections: Dict[str, GoalCandidate] = Field(default_factory=dict)
    synthesized_predicates: Dict[str, List[str]] = Field(default_factory=dict)
    synthesized_actions: Dict[str, List[str]] = Field(default_factory=dict)

    def __hash__(self) -> int:
        return hash((self.domain_name, self.backend))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "domain": self.domain_name,
            "backend": self.backend,
            "humans": {
                human_id: {
                    "distribution": self.distributions[human_id].to_dict()["candidates"],
                    "selected": candidate_to_dict(self.selections[human_id]),
                    "synthesized_predicates": self.synthesized_predicates.get(human_id, []),
                    "synthesized_actions": self.synthesized_actions.get(human_id, []),
                }
                for human_id in sorted(self.distributions)
            },
        }
