"""
Goal prediction for humans in the planning frame.

A backend turns a human's interaction history into raw (goal, weight)
candidates; predict_goals renormalizes them into a GoalDistribution and flags
goals the domain cannot express. Uncovered goals are handed to
synthesize_missing_elements before the argmax goal is selected.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple
import json
import logging
import math

import pandas as pd

from config import Config
from core.exceptions import (
    DegenerateWeights,
    InvalidDomain,
    NoGoalCandidates,
    SchemaViolation,
    SynthesisInvalid,
    TypeCycle,
    UncoveredGoalWithoutSynthesis,
    UndeclaredPredicate,
)
from core.knowledge_base import ELEMENTS_SCHEMA, elements_from_dict, elements_to_dict, load_prompt, validate_domain_elements
from models.knowledge import ActionSchema, DomainElements, PredicateSignature
from models.literal import Literal
from models.prediction import GoalCandidate, GoalDistribution
from models.scene_graph import AgentNode, InteractionHistory, SceneGraph

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

PREDICT_PROMPT = "predict_goals.v1.txt"
SYNTHESIZE_PROMPT = "synthesize.v1.txt"
ITEM_VARIABLE = "?item"

Goal = FrozenSet[Literal]
RawCandidate = Tuple[Goal, float, Optional[str]]

PREDICTION_SCHEMA = {
    "type": "object",
    "required": ["candidates"],
    "properties": {
        "candidates": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["goal", "weight"],
                "properties": {
                    "goal": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                    "weight": {"type": "number", "minimum": 0},
                    "rationale": {"type": "string"},
                },
            },
        },
    },
}

SYNTHESIS_SCHEMA = {
    "type": "object",
    "required": ["predicates", "actions"],
    "properties": {
        "predicates": ELEMENTS_SCHEMA["properties"]["predicates"],
        "actions": ELEMENTS_SCHEMA["properties"]["actions"],
    },
}


def literal_covered(literal: Literal, domain: DomainElements) -> bool:
    """A literal is covered when its predicate is declared with matching arity and some action adds it."""
    signature = domain.predicate(literal.predicate)
    if signature is None or signature.arity != len(literal.args):
        return False
    return any(
        effect.predicate == literal.predicate
        for action in domain.actions
        for effect in action.add_effects
    )


def uncovered_literals(dist: GoalDistribution, domain: DomainElements) -> List[Literal]:
    missing = {
        literal
        for candidate in dist.candidates
        for literal in candidate.goal
        if not literal_covered(literal, domain)
    }
    return sorted(missing, key=lambda literal: literal.sort_key())


def flag_coverage(dist: GoalDistribution, domain: DomainElements) -> GoalDistribution:
    """Recompute the covered flag of every candidate against a (possibly extended) domain."""
    candidates = tuple(
        candidate.model_copy(update={
            "covered": all(literal_covered(literal, domain) for literal in candidate.goal)
        })
        for candidate in dist.candidates
    )
    return GoalDistribution(human_id=dist.human_id, candidates=candidates)


def renormalize(raw: Sequence[Tuple[Any, ...]], human_id: str = "") -> GoalDistribution:
    """
    Turn raw weights into probabilities.

    Args:
        raw: (goal, weight) or (goal, weight, rationale) tuples; identical goals
            are merged into the first occurrence and their weights summed
        human_id: Owner of the distribution

    Returns:
        GoalDistribution with probability = weight / total, order preserved

    Raises:
        DegenerateWeights: empty input, a negative or non-finite weight, or all zero
    """
    merged: Dict[Goal, List[Any]] = {}
    for entry in raw:
        goal = frozenset(entry[0])
        weight = float(entry[1])
        rationale = entry[2] if len(entry) > 2 else None
        if not math.isfinite(weight) or weight < 0:
            raise DegenerateWeights(f"Goal weight {weight} for {human_id or 'human'} is not a non-negative number")
        if goal in merged:
            merged[goal][0] += weight
        else:
            merged[goal] = [weight, rationale]

    total = sum(weight for weight, _ in merged.values())
    if not merged or total <= 0:
        raise DegenerateWeights(f"No positive goal weight for {human_id or 'human'}")

    candidates = tuple(
        GoalCandidate(
            human_id=human_id,
            goal=goal,
            probability=min(1.0, weight / total),
            rationale=rationale,
        )
        for goal, (weight, rationale) in merged.items()
    )
    return GoalDistribution(human_id=human_id, candidates=candidates)


def select_goal(dist: GoalDistribution) -> GoalCandidate:
    """Highest probability; exact ties go to the lexicographically smallest canonical goal."""
    return min(dist.candidates, key=lambda c: (-c.probability, c.canonical()))


def _cap(raw: List[RawCandidate], max_candidates: int) -> List[RawCandidate]:
    merged: Dict[Goal, RawCandidate] = {}
    for goal, weight, rationale in raw:
        if goal in merged:
            previous = merged[goal]
            merged[goal] = (goal, previous[1] + weight, previous[2])
        else:
            merged[goal] = (goal, weight, rationale)
    ranked = sorted(
        merged.values(),
        key=lambda c: (-c[1], " ".join(sorted(str(literal) for literal in c[0]))),
    )
    return ranked[:max_candidates]


class PredictorBackend(ABC):
    """Produces raw goal candidates and, where able, domain extensions."""

    name = "abstract"

    def __init__(self, max_candidates: int = None):
        self.max_candidates = max_candidates or Config.PREDICTOR_MAX_CANDIDATES

    @abstractmethod
    def propose(self, human: AgentNode, history: InteractionHistory, domain: DomainElements,
                scene: SceneGraph) -> List[RawCandidate]:
        pass

    def synthesize(self, dist: GoalDistribution, domain: DomainElements,
                   missing: List[Literal]) -> Tuple[Tuple[PredicateSignature, ...], Tuple[ActionSchema, ...]]:
        raise UncoveredGoalWithoutSynthesis(
            f"Predicted goal of {dist.human_id} needs {', '.join(map(str, missing))}, "
            f"which the '{self.name}' predictor cannot add to the domain"
        )


class HeuristicBackend(PredictorBackend):
    """
    Recency-weighted frequency over item categories.

    score(c) = sum of gamma ** (horizon - t) over the history's item events
    whose item has category c. Each category maps to a goal through the
    knowledge base's goal templates, bound to the most recently used item of
    that category.
    """

    name = "heuristic"

    def __init__(self, goal_templates: Dict[str, str], gamma: float = None, max_candidates: int = None):
        super().__init__(max_candidates)
        self.goal_templates = {category.lower(): Literal.parse(text) for category, text in goal_templates.items()}
        self.gamma = Config.PREDICTOR_GAMMA if gamma is None else gamma
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")

    def goal_for(self, category: str, item_id: str) -> Optional[Goal]:
        template = self.goal_templates.get(category)
        if template is None:
            return None
        literal = template.substitute({ITEM_VARIABLE: item_id})
        if not literal.is_ground:
            logger.warning(f"Goal template for '{category}' has variables other than {ITEM_VARIABLE}: {template}")
            return None
        return frozenset([literal])

    def score_events(self, history: InteractionHistory, scene: SceneGraph) -> pd.DataFrame:
        """
        Per-category recency-weighted scores.

        Returns:
            DataFrame with columns category, score, item (most recent item of the
            category, smallest id on equal timestep), sorted by category
        """
        rows = []
        for t, item_id in history.item_events:
            item = scene.item(item_id)
            if item is None:
                logger.warning(f"Item {item_id} from the history of {history.human_id} is not in the scene")
                continue
            category = item.category.lower()
            if category in self.goal_templates:
                rows.append({"t": t, "item": item_id, "category": category})

        if not rows:
            return pd.DataFrame(columns=["category", "score", "item"])

        events = pd.DataFrame(rows).sort_values(["category", "t", "item"]).reset_index(drop=True)
        events["weight"] = events["t"].map(lambda t: self.gamma ** (history.horizon - t))
        scores = events.groupby("category", sort=True)["weight"].sum()
        latest = (
            events.sort_values(["category", "t", "item"], ascending=[True, False, True])
            .groupby("category", sort=True)["item"]
            .first()
        )
        return pd.DataFrame({"score": scores, "item": latest}).reset_index()

    def propose(self, human: AgentNode, history: InteractionHistory, domain: DomainElements,
                scene: SceneGraph) -> List[RawCandidate]:
        scored = self.score_events(history, scene)
        raw: List[RawCandidate] = []
        for row in scored.itertuples(index=False):
            goal = self.goal_for(row.category, row.item)
            if goal is not None:
                raw.append((goal, float(row.score), f"{row.category} used recently (score {row.score:.4g})"))

        if not raw:
            logger.info(f"No scored interactions for {human.id}; using a uniform prior over room {human.parent_room}")
            for item in sorted(scene.items_in(human.parent_room), key=lambda i: i.id):
                if not item.accessible:
                    continue
                goal = self.goal_for(item.category.lower(), item.id)
                if goal is not None:
                    raw.append((goal, 1.0, f"{item.id} is within reach in {human.parent_room}"))

        return _cap(raw, self.max_candidates)


class LLMBackend(PredictorBackend):
    """Asks the LLM for weighted goal candidates and for missing domain elements."""

    name = "llm"

    def __init__(self, gateway, store=None, temperature: float = 0.0, max_candidates: int = None):
        super().__init__(max_candidates)
        self.gateway = gateway
        self.store = store
        self.temperature = temperature

    def build_prompt(self, human: AgentNode, history: InteractionHistory, domain: DomainElements,
                     scene: SceneGraph) -> str:
        items = "\n".join(
            f"- {item.id}, {item.category}, {item.parent_room}, "
            f"{'accessible' if item.accessible else 'not accessible'}, "
            f"{json.dumps(dict(sorted(item.states.items())))}"
            for item in sorted(scene.items, key=lambda i: i.id)
        ) or "- none"
        events = "\n".join(
            f"- t={t}: {edge.relation} {edge.target if edge.source == human.id else edge.source}"
            for t, edge in history.edge_events
        ) or "- none observed"
        predicates = "\n".join(
            f"- ({p.name}{''.join(f' {q.name} - {q.type}' for q in p.params)})" for p in domain.predicates
        ) or "- none"
        return load_prompt(PREDICT_PROMPT).substitute(
            human=human.id,
            room=human.parent_room,
            activity=human.current_action or "idle",
            items=items,
            history=events,
            predicates=predicates,
            max_candidates=self.max_candidates,
        )

    def propose(self, human: AgentNode, history: InteractionHistory, domain: DomainElements,
                scene: SceneGraph) -> List[RawCandidate]:
        def semantic_check(reply: Dict[str, Any]) -> None:
            for candidate in reply["candidates"]:
                for text in candidate["goal"]:
                    literal = Literal.parse(text)
                    if literal.negated or not literal.is_ground:
                        raise ValueError(f"goal literal {text} must be positive and ground")

        request = self.gateway.request(
            prompt=self.build_prompt(human, history, domain, scene),
            response_schema=PREDICTION_SCHEMA,
            temperature=self.temperature,
        )
        reply = self.gateway.complete_structured(request, self.store, validator=semantic_check)
        raw = [
            (
                frozenset(Literal.parse(text) for text in candidate["goal"]),
                float(candidate["weight"]),
                candidate.get("rationale"),
            )
            for candidate in reply["candidates"]
        ]
        return _cap(raw, self.max_candidates)

    def synthesize(self, dist: GoalDistribution, domain: DomainElements,
                   missing: List[Literal]) -> Tuple[Tuple[PredicateSignature, ...], Tuple[ActionSchema, ...]]:
        def semantic_check(reply: Dict[str, Any]) -> None:
            try:
                addition = elements_from_dict({"predicates": reply["predicates"], "actions": reply["actions"]})
                clashes = redefined_elements(domain, addition)
                if clashes:
                    raise ValueError(f"redefines existing domain elements: {', '.join(clashes)}")
                extended = validate_domain_elements(
                    domain.extended(list(addition.predicates), list(addition.actions))
                )
            except (InvalidDomain, UndeclaredPredicate, TypeCycle) as e:
                raise ValueError(str(e))
            still_missing = [literal for literal in missing if not literal_covered(literal, extended)]
            if still_missing:
                raise ValueError(f"still not achievable: {', '.join(map(str, still_missing))}")

        prompt = load_prompt(SYNTHESIZE_PROMPT).substitute(
            domain=json.dumps(elements_to_dict(domain), indent=2, sort_keys=True),
            goals="\n".join(f"- {literal}" for literal in missing),
        )
        request = self.gateway.request(prompt=prompt, response_schema=SYNTHESIS_SCHEMA, temperature=self.temperature)
        try:
            reply = self.gateway.complete_structured(request, self.store, validator=semantic_check)
        except SchemaViolation as e:
            raise SynthesisInvalid(f"Synthesized elements for {dist.human_id} failed validation: {e.last_error}")

        addition = elements_from_dict({"predicates": reply["predicates"], "actions": reply["actions"]})
        logger.info(
            f"Synthesized {len(addition.predicates)} predicates and {len(addition.actions)} actions "
            f"for {dist.human_id}"
        )
        return addition.predicates, addition.actions


def redefined_elements(domain: DomainElements, addition: DomainElements) -> List[str]:
    """Names in `addition` that `domain` already defines differently. Verbatim repeats are allowed."""
    clashes = [
        f"predicate {p.name}" for p in addition.predicates
        if domain.predicate(p.name) is not None and domain.predicate(p.name) != p
    ]
    clashes += [
        f"action {a.name}" for a in addition.actions
        if domain.action(a.name) is not None and domain.action(a.name) != a
    ]
    return clashes


def resolve_backend(backend, kb=None, gateway=None, store=None, gamma: float = None,
                    max_candidates: int = None) -> PredictorBackend:
    if isinstance(backend, PredictorBackend):
        return backend
    if backend == "heuristic":
        templates = kb.goal_templates if kb is not None else {}
        return HeuristicBackend(templates, gamma=gamma, max_candidates=max_candidates)
    if backend == "llm":
        if gateway is None:
            raise ValueError("The llm predictor requires an LLM gateway")
        return LLMBackend(gateway, store, max_candidates=max_candidates)
    raise ValueError(f"Unknown predictor backend: {backend}")


def predict_goals(human: AgentNode, history: InteractionHistory, domain: DomainElements,
                  backend: PredictorBackend, scene: SceneGraph) -> GoalDistribution:
    """
    Predict the next goal of one human.

    Args:
        human: Human node in the planning frame
        history: Interaction history of that human
        domain: Current domain elements, used for coverage flags
        backend: Predictor backend
        scene: Planning frame supplying item categories and room contents

    Returns:
        Valid GoalDistribution with uncovered candidates flagged

    Raises:
        NoGoalCandidates, DegenerateWeights, gateway errors
    """
    raw = backend.propose(human, history, domain, scene)
    if not raw:
        raise NoGoalCandidates(f"The '{backend.name}' predictor found no goal candidates for {human.id}")

    dist = flag_coverage(renormalize(raw, human.id), domain)
    logger.info(
        f"Predicted {len(dist.candidates)} goal candidates for {human.id} "
        f"({len(dist.uncovered)} uncovered) with the '{backend.name}' predictor"
    )
    return dist


def synthesize_missing_elements(dist: GoalDistribution, domain: DomainElements,
                                backend: PredictorBackend
                                ) -> Tuple[Tuple[PredicateSignature, ...], Tuple[ActionSchema, ...]]:
    """
    New predicates and actions that make every uncovered goal expressible.

    Returns:
        (predicates, actions); both empty when nothing is uncovered

    Raises:
        UncoveredGoalWithoutSynthesis, SynthesisInvalid
    """
    missing = uncovered_literals(dist, domain)
    if not missing:
        return (), ()
    return backend.synthesize(dist, domain, missing)
