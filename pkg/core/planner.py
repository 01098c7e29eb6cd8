"""
Planner

Grounds a DomainSpec/ProblemSpec pair into a propositional task, searches it
with uniform-cost, A* (goal-count) or greedy best-first (additive heuristic)
search, and validates plans with a separate set-based simulation.

States are Python ints used as bit-sets over the task's atom index.
"""

from collections import deque
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterator, List, Optional, Set, Tuple, Union
import heapq
import logging
import random
import time

from config import Config
from core.documents import Document, decode, dump_json, validate_against
from core.exceptions import (
    ExplosionGuard,
    OracleCapExceeded,
    ResourceLimit,
    Unsolvable,
    UnknownAction,
)
from core.grounding import OCCUPANCY_PREDICATE, require_type_correct
from models.knowledge import ActionSchema
from models.literal import GroundAtom, Literal, atom_to_text
from models.planning import (
    DomainSpec,
    GroundAction,
    GroundedTask,
    Plan,
    PlanStep,
    ProblemSpec,
    SearchConfig,
    SearchStrategy,
    Verdict,
    VerdictStatus,
)

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

STRATEGY_ALIASES = {
    "ucs": SearchStrategy.UNIFORM_COST,
    "astar": SearchStrategy.ASTAR_GOALCOUNT,
    "gbfs": SearchStrategy.GBFS_HADD,
}

PLAN_SCHEMA = {
    "type": "object",
    "required": ["steps"],
    "properties": {
        "steps": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["agent", "action", "args"],
                "properties": {
                    "agent": {"type": "string"},
                    "action": {"type": "string"},
                    "args": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "metadata": {"type": "object"},
    },
}


def resolve_strategy(strategy: Union[str, SearchStrategy]) -> SearchStrategy:
    if isinstance(strategy, SearchStrategy):
        return strategy
    if strategy in STRATEGY_ALIASES:
        return STRATEGY_ALIASES[strategy]
    return SearchStrategy(strategy)


def _popcount(value: int) -> int:
    return bin(value).count("1")


# Grounding

def _objects_by_type(domain: DomainSpec, problem: ProblemSpec) -> Dict[str, List[str]]:
    by_type: Dict[str, List[str]] = {}
    for type_name in list(domain.type_hierarchy.types) + ["object"]:
        by_type[type_name] = sorted(
            object_id for object_id, object_type in problem.objects.items()
            if domain.type_hierarchy.is_subtype(object_type, type_name)
        )
    return by_type


def _bindings(schema: ActionSchema, by_type: Dict[str, List[str]],
              reached: Set[GroundAtom]) -> Iterator[Dict[str, str]]:
    """Parameter bindings whose positive preconditions all hold in the relaxed reachable set."""
    params = list(schema.params)
    positive = [lit for lit in schema.preconditions if not lit.negated]
    checks: List[List[Literal]] = [[] for _ in params]
    for literal in positive:
        last = max((i for i, p in enumerate(params) if p.name in literal.args), default=-1)
        checks[max(last, 0)].append(literal)

    binding: Dict[str, str] = {}

    def extend(depth: int) -> Iterator[Dict[str, str]]:
        if depth == len(params):
            yield dict(binding)
            return
        param = params[depth]
        for object_id in by_type.get(param.type, []):
            binding[param.name] = object_id
            if all(lit.substitute(binding).atom in reached for lit in checks[depth]):
                yield from extend(depth + 1)
        binding.pop(param.name, None)

    if not params:
        if all(lit.atom in reached for lit in positive):
            yield {}
        return
    yield from extend(0)


def ground_task(d: DomainSpec, p: ProblemSpec, action_cap: int = None) -> GroundedTask:
    """
    Instantiate every action schema over type-compatible objects, keeping
    only instances reachable from init under delete relaxation.

    Args:
        d: Domain
        p: Problem that type-checks against d
        action_cap: Maximum number of ground actions (Config.GROUNDING_ACTION_CAP)

    Returns:
        GroundedTask whose atom universe is the relaxed-reachable atoms plus the goal atoms

    Raises:
        TypeMismatch, ExplosionGuard
    """
    require_type_correct(d, p)
    cap = action_cap or Config.GROUNDING_ACTION_CAP
    by_type = _objects_by_type(d, p)

    reached: Set[GroundAtom] = {literal.atom for literal in p.init}
    instances: Dict[Tuple[str, ...], Tuple[ActionSchema, Dict[str, str]]] = {}
    changed = True
    while changed:
        changed = False
        for schema in d.actions:
            for binding in list(_bindings(schema, by_type, reached)):
                key = (schema.name,) + tuple(binding[param.name] for param in schema.params)
                if key in instances:
                    continue
                instances[key] = (schema, binding)
                if len(instances) > cap:
                    raise ExplosionGuard(f"Grounding exceeds {cap} actions")
                for effect in schema.add_effects:
                    atom = effect.substitute(binding).atom
                    if atom not in reached:
                        reached.add(atom)
                        changed = True

    goal_atoms = {literal.atom for literal in p.goal_literals()}
    atoms = tuple(sorted(reached | goal_atoms))
    index = {atom: i for i, atom in enumerate(atoms)}

    actions = []
    for key in sorted(instances):
        schema, binding = instances[key]
        agent_param = schema.agent_param(d.type_hierarchy)
        pre, pre_neg = set(), set()
        for literal in schema.preconditions:
            atom = literal.substitute(binding).atom
            if literal.negated:
                if atom in index:
                    pre_neg.add(index[atom])
            else:
                pre.add(index[atom])
        add = {index[lit.substitute(binding).atom] for lit in schema.add_effects}
        delete = {index[lit.substitute(binding).atom] for lit in schema.del_effects if lit.substitute(binding).atom in index}
        actions.append(GroundAction(
            agent=binding[agent_param.name] if agent_param else "",
            schema_name=schema.name,
            args=key[1:],
            pre=frozenset(pre),
            add=frozenset(add),
            delete=frozenset(delete - add),
            pre_neg=frozenset(pre_neg),
        ))

    init = 0
    for literal in p.init:
        init |= 1 << index[literal.atom]
    task = GroundedTask(
        atoms=atoms,
        init=init,
        goal=frozenset(index[atom] for atom in goal_atoms),
        actions=tuple(actions),
        robot_id=p.robot_id,
        atom_index=index,
    )
    logger.info(f"Grounded {p.name}: {len(atoms)} atoms, {len(actions)} actions")
    return task


# Search

def _applicable(action: GroundAction, state: int) -> bool:
    return state & action.pre_mask == action.pre_mask and not state & action.neg_mask


def _apply(action: GroundAction, state: int) -> int:
    return (state & ~action.del_mask) | action.add_mask


def _h_goalcount(task: GroundedTask, goal_mask: int, state: int) -> float:
    return _popcount(goal_mask & ~state)


def _h_add(task: GroundedTask, goal_mask: int, state: int) -> float:
    costs = {i: 0 for i in range(len(task.atoms)) if state >> i & 1}
    changed = True
    while changed:
        changed = False
        for action in task.actions:
            if not all(i in costs for i in action.pre):
                continue
            cost = action.cost + sum(costs[i] for i in action.pre)
            for i in action.add:
                if cost < costs.get(i, float("inf")):
                    costs[i] = cost
                    changed = True
    total = 0
    for i in task.goal:
        if i not in costs:
            return float("inf")
        total += costs[i]
    return total


def _extract(task: GroundedTask, parents: Dict[int, Tuple[int, GroundAction]], state: int) -> List[GroundAction]:
    steps = []
    while state in parents:
        state, action = parents[state]
        steps.append(action)
    steps.reverse()
    return steps


def to_plan(actions: List[GroundAction], metadata: Dict[str, Any] = None) -> Plan:
    steps = tuple(
        PlanStep(index=i, agent=action.agent, schema_name=action.schema_name, args=action.args)
        for i, action in enumerate(actions)
    )
    return Plan(steps=steps, metadata=metadata or {})


def plan(task: GroundedTask, cfg: SearchConfig = None) -> Plan:
    """
    Search for a plan.

    Ties on the f-value go to the path with fewer steps by agents other
    than the robot, then to insertion order; successors are generated in an
    action order shuffled with cfg.seed.

    Args:
        task: Grounded task
        cfg: Strategy, expansion limit and seed

    Returns:
        Plan; uniform_cost plans have minimum length

    Raises:
        Unsolvable, ResourceLimit
    """
    cfg = cfg or SearchConfig(max_expansions=Config.PLANNER_MAX_EXPANSIONS)
    goal_mask = task.goal_mask
    actions = list(task.actions)
    random.Random(cfg.seed).shuffle(actions)

    if cfg.strategy == SearchStrategy.UNIFORM_COST:
        heuristic = None
    elif cfg.strategy == SearchStrategy.ASTAR_GOALCOUNT:
        heuristic = _h_goalcount
    else:
        heuristic = _h_add

    def priority(g: int, state: int) -> float:
        if heuristic is None:
            return g
        h = heuristic(task, goal_mask, state)
        return h if cfg.strategy == SearchStrategy.GBFS_HADD else g + h

    counter = 0
    start = time.perf_counter()
    unreached = (float("inf"), float("inf"))
    best: Dict[int, Tuple[int, int]] = {task.init: (0, 0)}
    parents: Dict[int, Tuple[int, GroundAction]] = {}
    frontier = [(priority(0, task.init), 0, counter, (0, 0), task.init)]
    closed: Set[int] = set()
    expansions = 0

    while frontier:
        _, _, _, cost, state = heapq.heappop(frontier)
        if state in closed or cost > best.get(state, cost):
            continue
        if state & goal_mask == goal_mask:
            found = _extract(task, parents, state)
            metadata = {
                "strategy": cfg.strategy.value,
                "seed": cfg.seed,
                "expansions": expansions,
                "generated": counter,
                "runtime": round(time.perf_counter() - start, 6),
            }
            logger.info(f"Found a {len(found)}-step plan with {cfg.strategy.value} after {expansions} expansions")
            return to_plan(found, metadata)

        closed.add(state)
        expansions += 1
        if expansions > cfg.max_expansions:
            raise ResourceLimit(f"Search exceeded {cfg.max_expansions} expansions")

        for action in actions:
            if not _applicable(action, state):
                continue
            successor = _apply(action, state)
            successor_cost = (cost[0] + action.cost, cost[1] + (action.agent != task.robot_id))
            if successor in closed or successor_cost >= best.get(successor, unreached):
                continue
            f_successor = priority(successor_cost[0], successor)
            if f_successor == float("inf"):
                continue
            best[successor] = successor_cost
            parents[successor] = (state, action)
            counter += 1
            heapq.heappush(frontier, (f_successor, successor_cost[1], counter, successor_cost, successor))

    raise Unsolvable(f"No plan reaches the goal ({expansions} states expanded)")


def optimal_plan_bfs(task: GroundedTask, state_cap: int = None) -> Plan:
    """
    Breadth-first minimum-length plan over frozenset states, for use as a test oracle.

    Raises:
        OracleCapExceeded, Unsolvable
    """
    cap = state_cap or Config.ORACLE_STATE_CAP
    goal = frozenset(task.atoms[i] for i in task.goal)
    init = task.init_atoms()
    if goal <= init:
        return Plan()

    operators = [
        (
            action,
            frozenset(task.atoms[i] for i in action.pre),
            frozenset(task.atoms[i] for i in action.pre_neg),
            frozenset(task.atoms[i] for i in action.add),
            frozenset(task.atoms[i] for i in action.delete),
        )
        for action in task.actions
    ]
    parents: Dict[FrozenSet[GroundAtom], Optional[Tuple[FrozenSet[GroundAtom], GroundAction]]] = {init: None}
    queue = deque([init])
    while queue:
        state = queue.popleft()
        for action, pre, pre_neg, add, delete in operators:
            if not pre <= state or pre_neg & state:
                continue
            successor = (state - delete) | add
            if successor in parents:
                continue
            parents[successor] = (state, action)
            if len(parents) > cap:
                raise OracleCapExceeded(f"Oracle search exceeded {cap} states")
            if goal <= successor:
                steps = []
                current = successor
                while parents[current] is not None:
                    current, taken = parents[current]
                    steps.append(taken)
                steps.reverse()
                return to_plan(steps)
            queue.append(successor)
    raise Unsolvable(f"Oracle search exhausted {len(parents)} states without reaching the goal")


# Validation

def trajectory(task: GroundedTask, plan_: Plan) -> List[FrozenSet[GroundAtom]]:
    """States visited by a plan, init first; stops before the first inapplicable step."""
    state = set(task.init_atoms())
    states = [frozenset(state)]
    for step in plan_.steps:
        action = task.find_action(step.schema_name, step.args)
        if action is None:
            raise UnknownAction(f"Step {step.index} {step} is not a ground action of the task")
        if any(task.atoms[i] not in state for i in action.pre) or any(task.atoms[i] in state for i in action.pre_neg):
            break
        state -= {task.atoms[i] for i in action.delete}
        state |= {task.atoms[i] for i in action.add}
        states.append(frozenset(state))
    return states


def validate_plan(task: GroundedTask, plan_: Plan) -> Verdict:
    """
    Simulate a plan step by step.

    Returns:
        Verdict: valid, invalid(step, first missing precondition) or goal_unmet(atoms)

    Raises:
        UnknownAction
    """
    state = set(task.init_atoms())
    for step in plan_.steps:
        action = task.find_action(step.schema_name, step.args)
        if action is None:
            raise UnknownAction(f"Step {step.index} {step} is not a ground action of the task")
        missing = sorted(task.atoms[i] for i in action.pre if task.atoms[i] not in state)
        if missing:
            return Verdict(status=VerdictStatus.INVALID, step=step.index, missing=atom_to_text(missing[0]))
        forbidden = sorted(task.atoms[i] for i in action.pre_neg if task.atoms[i] in state)
        if forbidden:
            return Verdict(
                status=VerdictStatus.INVALID, step=step.index, missing=f"(not {atom_to_text(forbidden[0])})"
            )
        state -= {task.atoms[i] for i in action.delete}
        state |= {task.atoms[i] for i in action.add}

    unmet = sorted(task.atoms[i] for i in task.goal if task.atoms[i] not in state)
    if unmet:
        return Verdict(status=VerdictStatus.GOAL_UNMET, unmet=tuple(atom_to_text(atom) for atom in unmet))
    return Verdict(status=VerdictStatus.VALID)


def occupancy_conflicts(task: GroundedTask, plan_: Plan) -> List[int]:
    """
    Trajectory positions (0 = init) whose state has the robot in a room
    marked human-active-in.
    """
    if task.robot_id is None:
        return []
    conflicts = []
    for position, state in enumerate(trajectory(task, plan_)):
        rooms = {atom[2] for atom in state if atom[0] == "at-agent" and len(atom) == 3 and atom[1] == task.robot_id}
        if any((OCCUPANCY_PREDICATE, room) in state for room in rooms):
            conflicts.append(position)
    return conflicts


# Plan files

def plan_to_dict(plan_: Plan, record_timing: bool = False) -> Dict[str, Any]:
    metadata = dict(plan_.metadata)
    if not record_timing:
        metadata.pop("runtime", None)
    return {
        "steps": [
            {"agent": step.agent, "action": step.schema_name, "args": list(step.args)}
            for step in plan_.steps
        ],
        "metadata": metadata,
    }


def plan_to_text(plan_: Plan) -> str:
    """Classical plan text, one (action args) per line."""
    return "".join(f"{step}\n" for step in plan_.steps)


def write_plan(directory: Union[str, Path], name: str, plan_: Plan, record_timing: bool = False) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    json_path = directory / "plan.json"
    json_path.write_text(dump_json(plan_to_dict(plan_, record_timing)), encoding="utf-8")
    text_path = directory / f"{name}.plan"
    text_path.write_text(plan_to_text(plan_), encoding="utf-8")
    return [json_path, text_path]


def load_plan(document: Document) -> Plan:
    """
    Load a plan.json document.

    Raises:
        SchemaError
    """
    data = decode(document, "plan")
    validate_against(data, PLAN_SCHEMA, "plan")
    steps = tuple(
        PlanStep(index=i, agent=step["agent"], schema_name=step["action"], args=tuple(step["args"]))
        for i, step in enumerate(data["steps"])
    )
    return Plan(steps=steps, metadata=data.get("metadata", {}))
