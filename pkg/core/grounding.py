"""
Grounding Engine

Builds the multi-agent planning problem from the latest scene graph, the
knowledge base and the per-human goal predictions, and type-checks problems
against domains.

Init-state mapping:
    rooms  -> objects of type room, (connected a b) for both directions of every adjacency
    items  -> (at item room) unless held, (accessible item) when accessible,
              one (key-value item) literal per state entry
    agents -> (at-agent agent room), (holding agent item); when the domain
              declares them also (is-robot a) / (is-human a), (robot-in room)
              and (human-active-in room) for humans with a current action
"""

from contextlib import contextmanager
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Tuple
import logging

import networkx as nx

from core.documents import Document, load_document
from core.exceptions import (
    AwarePlanError,
    DuplicateObject,
    EmptySequence,
    GroundingError,
    IllTypedGoal,
    InvalidDomain,
    TypeMismatch,
    UndeclaredStatePredicate,
    UnknownRoom,
)
from core.knowledge_base import extract_domain_elements, get_knowledge, validate_domain_elements
from core.predictor import (
    PredictorBackend,
    flag_coverage,
    predict_goals,
    select_goal,
    synthesize_missing_elements,
)
from core.scene_graph import build_history, get_robot_node, room_topology
from models.knowledge import DomainElements, KnowledgeBase
from models.literal import Literal
from models.planning import SUPPORTED_REQUIREMENTS, DomainSpec, ProblemSpec
from models.prediction import GoalCandidate, PredictionReport
from models.scene_graph import AgentNode, ItemNode, SnapshotSequence

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

AGENT_TYPE = "agent"
ROOM_TYPE = "room"
ITEM_TYPE = "item"
OCCUPANCY_PREDICATE = "human-active-in"


def _updated(problem: ProblemSpec, **changes: Any) -> ProblemSpec:
    fields = {
        "name": problem.name,
        "domain_name": problem.domain_name,
        "objects": dict(problem.objects),
        "init": problem.init,
        "robot_id": problem.robot_id,
        "goals": dict(problem.goals),
    }
    fields.update(changes)
    return ProblemSpec(**fields)


def _declared(domain: Optional[DomainSpec], predicate: str, arity: int) -> bool:
    if domain is None:
        return False
    signature = domain.predicate(predicate)
    return signature is not None and signature.arity == arity


def state_predicate(key: str, value: str) -> str:
    """State entry key:value -> predicate name "key-value"."""
    return f"{key}-{value}".strip().lower().replace(" ", "-").replace("_", "-")


def empty_problem(name: str, domain_name: str) -> ProblemSpec:
    return ProblemSpec(name=name.lower(), domain_name=domain_name.lower())


def add_rooms(problem: ProblemSpec, rooms: nx.Graph) -> ProblemSpec:
    """Room objects plus symmetric (connected a b) literals."""
    objects = dict(problem.objects)
    for room_id in sorted(rooms.nodes):
        if room_id in objects and objects[room_id] != ROOM_TYPE:
            raise DuplicateObject(f"Room {room_id} is already an object of type {objects[room_id]}")
        objects[room_id] = ROOM_TYPE
    return _updated(problem, objects=objects, init=problem.init | connectivity_literals(rooms))


def connectivity_literals(rooms: nx.Graph) -> FrozenSet[Literal]:
    literals = set()
    for a, b in rooms.edges:
        literals.add(Literal(predicate="connected", args=(a, b)))
        literals.add(Literal(predicate="connected", args=(b, a)))
    return frozenset(literals)


def add_agent(problem: ProblemSpec, agent: AgentNode, domain: DomainSpec = None) -> ProblemSpec:
    """
    Add an agent object and its initial literals.

    Args:
        problem: Problem under construction
        agent: Robot or human node
        domain: Enables the kind, robot-in and human-active-in literals when it declares them

    Returns:
        Updated ProblemSpec; adding the robot also sets robot_id

    Raises:
        DuplicateObject
    """
    if agent.id in problem.objects:
        raise DuplicateObject(f"Agent {agent.id} is already an object of the problem")

    objects = dict(problem.objects)
    objects[agent.id] = AGENT_TYPE
    init = set(problem.init)
    init.add(Literal(predicate="at-agent", args=(agent.id, agent.parent_room)))
    init.update(Literal(predicate="holding", args=(agent.id, item_id)) for item_id in agent.holding)

    kind_predicate = "is-robot" if agent.is_robot else "is-human"
    if _declared(domain, kind_predicate, 1):
        init.add(Literal(predicate=kind_predicate, args=(agent.id,)))
    if agent.is_robot and _declared(domain, "robot-in", 1):
        init.add(Literal(predicate="robot-in", args=(agent.parent_room,)))
    if agent.is_human and agent.current_action and _declared(domain, OCCUPANCY_PREDICATE, 1):
        init.add(Literal(predicate=OCCUPANCY_PREDICATE, args=(agent.parent_room,)))

    changes: Dict[str, Any] = {"objects": objects, "init": frozenset(init)}
    if agent.is_robot:
        changes["robot_id"] = agent.id
    else:
        goals = dict(problem.goals)
        goals.setdefault(agent.id, frozenset())
        changes["goals"] = goals
    logger.info(f"Added {agent.kind.value} {agent.id} in {agent.parent_room}")
    return _updated(problem, **changes)


def set_init_state(problem: ProblemSpec, item: ItemNode, rooms: nx.Graph, domain: DomainSpec = None,
                   held: bool = False) -> ProblemSpec:
    """
    Add an item object and its initial literals.

    Args:
        problem: Problem whose rooms are already objects
        item: Item node
        rooms: Room topology of the planning frame
        domain: State entries must name a declared unary predicate in it
        held: The item is in an agent's hands, so it gets no (at item room)

    Raises:
        UnknownRoom, UndeclaredStatePredicate, DuplicateObject
    """
    if problem.objects.get(item.parent_room) != ROOM_TYPE:
        raise UnknownRoom(f"Item {item.id} is in {item.parent_room}, which is not a room of the problem")
    if item.id in problem.objects:
        raise DuplicateObject(f"Item {item.id} is already an object of the problem")

    init = set(problem.init) | connectivity_literals(rooms)
    if not held:
        init.add(Literal(predicate="at", args=(item.id, item.parent_room)))
    if item.accessible:
        init.add(Literal(predicate="accessible", args=(item.id,)))
    for key, value in sorted(item.states.items()):
        predicate = state_predicate(key, value)
        if domain is not None and not _declared(domain, predicate, 1):
            raise UndeclaredStatePredicate(
                f"State {key}: {value} of {item.id} needs a unary predicate '{predicate}'"
            )
        init.add(Literal(predicate=predicate, args=(item.id,)))

    objects = dict(problem.objects)
    objects[item.id] = ITEM_TYPE
    return _updated(problem, objects=objects, init=frozenset(init))


def literal_violations(literal: Literal, domain: DomainSpec, objects: Dict[str, str]) -> List[str]:
    """Problems with a ground literal against a domain and an object table."""
    signature = domain.predicate(literal.predicate)
    if signature is None:
        return [f"undeclared predicate: {literal}"]
    if signature.arity != len(literal.args):
        return [f"wrong arity: {literal} (expects {signature.arity})"]
    problems = []
    for arg, param in zip(literal.args, signature.params):
        object_type = objects.get(arg)
        if object_type is None:
            problems.append(f"unknown object: {arg} in {literal}")
        elif not domain.type_hierarchy.is_subtype(object_type, param.type):
            problems.append(f"type mismatch: {arg} is {object_type}, {literal} expects {param.type}")
    return problems


def check_problem(domain: DomainSpec, problem: ProblemSpec) -> List[str]:
    """
    Type-check a problem against a domain.

    Returns:
        List of violations, empty when the problem type-checks
    """
    violations = []
    if problem.domain_name != domain.name:
        violations.append(f"domain mismatch: problem is for {problem.domain_name}, domain is {domain.name}")
    for object_id, type_name in sorted(problem.objects.items()):
        if not domain.type_hierarchy.has_type(type_name):
            violations.append(f"unknown type: {object_id} - {type_name}")
    for literal in sorted(problem.init, key=lambda lit: lit.sort_key()):
        if literal.negated:
            violations.append(f"negative init literal: {literal}")
        violations.extend(literal_violations(literal, domain, problem.objects))
    if problem.robot_id is not None and problem.robot_id not in problem.objects:
        violations.append(f"unknown robot: {problem.robot_id}")
    for agent_id in problem.partition_order():
        if agent_id not in problem.objects:
            violations.append(f"unknown goal agent: {agent_id}")
        for literal in sorted(problem.goals[agent_id], key=lambda lit: lit.sort_key()):
            violations.extend(literal_violations(literal, domain, problem.objects))
    return violations


def require_type_correct(domain: DomainSpec, problem: ProblemSpec) -> None:
    """
    Raises:
        TypeMismatch: the problem does not type-check against the domain
    """
    violations = check_problem(domain, problem)
    if violations:
        raise TypeMismatch(
            f"Problem {problem.name} does not type-check: {'; '.join(violations[:5])}"
            + (f" (+{len(violations) - 5} more)" if len(violations) > 5 else "")
        )


def check_domain(domain: DomainSpec) -> DomainSpec:
    """
    The domain validator applied to every DomainSpec before grounding.

    Raises:
        InvalidDomain, UndeclaredPredicate, TypeCycle
    """
    unsupported = [r for r in domain.requirements if r not in SUPPORTED_REQUIREMENTS]
    if unsupported:
        raise InvalidDomain(f"Unsupported requirements: {', '.join(unsupported)}")
    validate_domain_elements(domain.to_elements())
    needs_negation = any(lit.negated for action in domain.actions for lit in action.preconditions)
    if needs_negation and "negative-preconditions" not in domain.requirements:
        raise InvalidDomain(f"Domain {domain.name} uses negative preconditions without declaring them")
    return domain


def _goal(literals: Iterable[Literal], agent_id: str, domain: DomainSpec, problem: ProblemSpec) -> FrozenSet[Literal]:
    goal = frozenset(literals)
    problems = []
    for literal in sorted(goal, key=lambda lit: lit.sort_key()):
        if literal.negated:
            problems.append(f"negative goal literal: {literal}")
        else:
            problems.extend(literal_violations(literal, domain, problem.objects))
    if problems:
        raise IllTypedGoal(f"Goal for {agent_id} does not type-check: {'; '.join(problems)}")
    return goal


def add_goal(problem: ProblemSpec, human_id: str, goal: GoalCandidate, domain: DomainSpec) -> ProblemSpec:
    """
    Set the goal partition of a human, replacing any previous one.

    Raises:
        IllTypedGoal
    """
    goals = dict(problem.goals)
    goals[human_id] = _goal(goal.goal, human_id, domain, problem)
    return _updated(problem, goals=goals)


def add_robot_goal(problem: ProblemSpec, literals: Iterable[Literal], domain: DomainSpec) -> ProblemSpec:
    """
    Set the robot partition from the task input.

    Raises:
        IllTypedGoal
    """
    if problem.robot_id is None:
        raise IllTypedGoal("Cannot set a robot goal before the robot is added")
    goals = dict(problem.goals)
    goals[problem.robot_id] = _goal(literals, problem.robot_id, domain, problem)
    return _updated(problem, goals=goals)


def strip_occupancy_preconditions(domain: DomainSpec) -> DomainSpec:
    """The domain with every (not (human-active-in ...)) precondition removed."""
    actions = []
    for action in domain.actions:
        kept = frozenset(
            lit for lit in action.preconditions
            if not (lit.negated and lit.predicate == OCCUPANCY_PREDICATE)
        )
        actions.append(action.model_copy(update={"preconditions": kept}))
    elements = DomainElements(
        object_types=domain.type_hierarchy, predicates=domain.predicates, actions=tuple(actions)
    )
    stripped = DomainSpec.from_elements(domain.name, elements)
    logger.info(f"Stripped occupancy preconditions from domain {domain.name}")
    return stripped


def load_task(document: Document) -> Tuple[Optional[str], FrozenSet[Literal]]:
    """
    Load a robot task file.

    Returns:
        (task name or None, goal literals)

    Raises:
        SchemaError
    """
    data = load_document(document, "task", "task")
    try:
        goal = frozenset(Literal.parse(text) for text in data["goal"])
    except ValueError as e:
        raise IllTypedGoal(f"Task goal is malformed: {str(e)}")
    return data.get("name"), goal


@contextmanager
def _stage(name: str):
    try:
        yield
    except AwarePlanError as e:
        if e.stage is None:
            e.stage = name
        logger.error(f"Transform failed at stage '{name}': {e.message}")
        raise


def transform(kb: KnowledgeBase, seq: SnapshotSequence, extractor, predictor_backend: PredictorBackend,
              robot_goal: Iterable[Literal] = (), problem_name: str = None, gateway=None,
              store=None) -> Tuple[DomainSpec, ProblemSpec, PredictionReport]:
    """
    Transform human awareness into one multi-agent planning problem.

    Stages, in order: knowledge (extract domain elements), robot (rooms and
    the robot agent), items (initial item states), then for every human in id
    order: humans (agent and history), predict, synthesize (only when a
    candidate is uncovered) and goal (argmax goal partition). The robot goal
    from the task input is added last.

    Args:
        kb: Knowledge base
        seq: Snapshot sequence; the latest snapshot is the planning frame
        extractor: "passthrough", "llm" or an ElementExtractor
        predictor_backend: Resolved PredictorBackend
        robot_goal: Literals for the robot partition
        problem_name: Defaults to the latest snapshot's graph id
        gateway: LLM gateway for the llm extractor
        store: Replay store for the llm extractor

    Returns:
        (DomainSpec, ProblemSpec, PredictionReport)

    Raises:
        Errors of the constituent operations, with .stage set to the stage reached
    """
    with _stage("knowledge"):
        bundle = get_knowledge(kb, kb.domain_name)
        elements = extract_domain_elements(bundle, extractor, gateway, store)

    with _stage("humans"):
        if len(seq) == 0:
            raise EmptySequence("Cannot transform an empty snapshot sequence")
    frame = seq.latest
    domain = DomainSpec.from_elements(kb.domain_name, elements)

    with _stage("robot"):
        robot = get_robot_node(frame)
        topology = room_topology(frame)
        problem = empty_problem(problem_name or frame.graph_id, kb.domain_name)
        problem = add_rooms(problem, topology)
        problem = add_agent(problem, robot, domain)

    with _stage("items"):
        held = {item_id for agent in frame.agents for item_id in agent.holding}
        for item in sorted(frame.items, key=lambda i: i.id):
            problem = set_init_state(problem, item, topology, domain, held=item.id in held)

    distributions = {}
    selections = {}
    synthesized_predicates: Dict[str, List[str]] = {}
    synthesized_actions: Dict[str, List[str]] = {}
    for human in frame.humans():
        with _stage("humans"):
            problem = add_agent(problem, human, domain)
            history = build_history(seq, human.id)

        with _stage("predict"):
            dist = predict_goals(human, history, elements, predictor_backend, frame)

        if dist.uncovered:
            with _stage("synthesize"):
                new_predicates, new_actions = synthesize_missing_elements(dist, elements, predictor_backend)
                elements = validate_domain_elements(elements.extended(list(new_predicates), list(new_actions)))
                domain = DomainSpec.from_elements(kb.domain_name, elements)
                dist = flag_coverage(dist, elements)
                synthesized_predicates[human.id] = [p.name for p in new_predicates]
                synthesized_actions[human.id] = [a.name for a in new_actions]

        with _stage("goal"):
            choice = select_goal(dist)
            problem = add_goal(problem, human.id, choice, domain)
        distributions[human.id] = dist
        selections[human.id] = choice
        logger.info(f"Goal for {human.id}: {choice.canonical()} (p={choice.probability:.3f})")

    with _stage("goal"):
        robot_goal = frozenset(robot_goal)
        if robot_goal:
            problem = add_robot_goal(problem, robot_goal, domain)
        check_domain(domain)
        violations = check_problem(domain, problem)
        if violations:
            raise GroundingError(f"Problem does not type-check: {'; '.join(violations)}")

    report = PredictionReport(
        domain_name=domain.name,
        backend=predictor_backend.name,
        distributions=distributions,
        selections=selections,
        synthesized_predicates=synthesized_predicates,
        synthesized_actions=synthesized_actions,
    )
    logger.info(
        f"Transformed {frame.graph_id}: {len(problem.objects)} objects, {len(problem.init)} init literals, "
        f"{len(problem.goals)} goal partitions"
    )
    return domain, problem, report
