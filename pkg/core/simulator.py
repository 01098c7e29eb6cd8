"""
Household Simulator

Discrete-step world that executes the robot's part of a plan while humans
follow open-loop agendas, records a trace, scores disturbance and turns the
trace back into scene graph snapshots.

World step k (k >= 1) applies the robot's k-th plan step and every agenda
entry with t == k, producing the state with timestep k.
"""

from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple, Union
import json
import logging

from core.documents import Document, load_document
from core.exceptions import EmptyTrace, FaultedStep, SimulationError
from core.grounding import (
    OCCUPANCY_PREDICATE,
    add_agent,
    add_rooms,
    empty_problem,
    set_init_state,
)
from core.scene_graph import get_robot_node, room_topology
from models.knowledge import ActionSchema
from models.literal import GroundAtom
from models.planning import DomainSpec, GroundAction, Plan, PlanStep
from models.scene_graph import AgentNode, ItemNode, SceneGraph, SemanticEdge, SnapshotSequence
from models.simulation import (
    Activity,
    Agenda,
    AgendaEntry,
    DisturbanceReport,
    JointAction,
    Trace,
    TraceRecord,
    WorldState,
)

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

HOLDING_RELATION = "holding"

RobotAction = Union[GroundAction, PlanStep, Tuple[str, ...]]


def load_agenda(document: Document) -> Agenda:
    """
    Load one agenda file.

    Raises:
        SchemaError
    """
    data = load_document(document, "agenda", "agenda")
    script = tuple(
        AgendaEntry(
            t=entry["t"],
            activity=entry["activity"].lower(),
            target=entry["target"],
            relation=entry.get("relation", "using"),
        )
        for entry in data["script"]
    )
    return Agenda(human_id=data["human_id"], script=script)


def _action_key(action: Optional[RobotAction]) -> Optional[Tuple[str, ...]]:
    if action is None:
        return None
    if isinstance(action, tuple):
        return action
    return (action.schema_name,) + tuple(action.args)


def _bind(schema: ActionSchema, args: Tuple[str, ...]) -> Dict[str, str]:
    return {param.name: arg for param, arg in zip(schema.params, args)}


class HouseholdSimulator:
    """
    Simulates one household from an initial scene graph.

    The robot's actions are instantiated from the schemas of `domain`, which
    should be the domain the plan was produced with.
    """

    def __init__(self, initial: SceneGraph, domain: DomainSpec, agendas: Iterable[Agenda] = ()):
        self.initial = initial
        self.domain = domain
        self.robot_id = get_robot_node(initial).id
        self.agendas = self._index_agendas(agendas)

        self._tracks_occupancy = self._declares(OCCUPANCY_PREDICATE)
        self._tracks_robot_room = self._declares("robot-in")

    def _declares(self, predicate: str) -> bool:
        signature = self.domain.predicate(predicate)
        return signature is not None and signature.arity == 1

    def initial_state(self) -> WorldState:
        """World facts of the initial scene graph under the grounding init mapping."""
        topology = room_topology(self.initial)
        problem = add_rooms(empty_problem(self.initial.graph_id, self.domain.name), topology)
        problem = add_agent(problem, get_robot_node(self.initial), self.domain)
        for human in self.initial.humans():
            problem = add_agent(problem, human, self.domain)
        held = {item_id for agent in self.initial.agents for item_id in agent.holding}
        for item in sorted(self.initial.items, key=lambda i: i.id):
            problem = set_init_state(problem, item, topology, self.domain, held=item.id in held)

        activities: Dict[str, Optional[Activity]] = {}
        for human in self.initial.humans():
            if human.current_action:
                target = next(
                    (e.target for e in sorted(self.initial.edges, key=lambda e: (e.target, e.relation))
                     if e.source == human.id and self.initial.item(e.target) is not None),
                    None,
                )
                activities[human.id] = Activity(name=human.current_action, target=target)
            else:
                activities[human.id] = None
        return WorldState(timestep=0, facts=frozenset(lit.atom for lit in problem.init), activities=activities)

    def instantiate(self, key: Tuple[str, ...]) -> Tuple[Set[GroundAtom], Set[GroundAtom], Set[GroundAtom], Set[GroundAtom]]:
        """
        Returns:
            (positive preconditions, negative preconditions, add effects, delete effects)

        Raises:
            SimulationError: unknown schema or wrong argument count
        """
        schema = self.domain.action(key[0])
        if schema is None or len(schema.params) != len(key) - 1:
            raise SimulationError(f"{key[0]} with {len(key) - 1} arguments is not an action of {self.domain.name}")
        binding = _bind(schema, key[1:])
        pre = {lit.substitute(binding).atom for lit in schema.preconditions if not lit.negated}
        pre_neg = {lit.substitute(binding).atom for lit in schema.preconditions if lit.negated}
        add = {lit.substitute(binding).atom for lit in schema.add_effects}
        delete = {lit.substitute(binding).atom for lit in schema.del_effects} - add
        return pre, pre_neg, add, delete

    def _fault(self, w: WorldState, key: Tuple[str, ...]) -> Optional[str]:
        try:
            pre, pre_neg, _, _ = self.instantiate(key)
        except SimulationError as e:
            return str(e)
        missing = sorted(pre - w.facts)
        if missing:
            return f"precondition ({' '.join(missing[0])}) of ({' '.join(key)}) does not hold"
        blocked = sorted(pre_neg & w.facts)
        if blocked:
            return f"({' '.join(key)}) is blocked by ({' '.join(blocked[0])})"
        return None

    def _index_agendas(self, agendas: Iterable[Agenda]) -> Dict[str, Agenda]:
        indexed = {agenda.human_id: agenda for agenda in agendas}
        human_ids = {human.id for human in self.initial.humans()}
        item_ids = {item.id for item in self.initial.items}
        for agenda in indexed.values():
            if agenda.human_id not in human_ids:
                raise SimulationError(f"Agenda for unknown human {agenda.human_id}")
            for entry in agenda.script:
                if entry.target not in item_ids:
                    raise SimulationError(f"Agenda of {agenda.human_id} targets unknown item {entry.target} at t={entry.t}")
        return indexed

    def activities_at(self, t: int, agendas: Dict[str, Agenda] = None) -> Dict[str, Optional[Activity]]:
        agendas = self.agendas if agendas is None else agendas
        activities: Dict[str, Optional[Activity]] = {}
        for human in self.initial.humans():
            agenda = agendas.get(human.id)
            entry = agenda.entry_at(t) if agenda else None
            activities[human.id] = (
                Activity(name=entry.activity, target=entry.target, relation=entry.relation) if entry else None
            )
        return activities

    def _apply_activity(self, facts: Set[GroundAtom], human_id: str, activity: Activity) -> None:
        rooms = {fact[2] for fact in facts if fact[0] == "at" and fact[1] == activity.target}
        holders = {fact[1] for fact in facts if fact[0] == "holding" and fact[2] == activity.target}
        agent_rooms = {fact[1]: fact[2] for fact in facts if fact[0] == "at-agent"}
        room = next(iter(sorted(rooms)), None) or next((agent_rooms[h] for h in sorted(holders) if h in agent_rooms), None)
        if room is None:
            logger.warning(f"{human_id} cannot reach {activity.target}; activity {activity.name} has no effect")
            return

        for fact in [f for f in facts if f[0] == "at-agent" and f[1] == human_id]:
            facts.discard(fact)
        facts.add(("at-agent", human_id, room))

        schema = self.domain.action(activity.name)
        if schema is None:
            return
        binding: Dict[str, str] = {}
        hierarchy = self.domain.type_hierarchy
        for param in schema.params:
            if hierarchy.is_subtype(param.type, "agent") and human_id not in binding.values():
                binding[param.name] = human_id
            elif hierarchy.is_subtype(param.type, "item") and activity.target not in binding.values():
                binding[param.name] = activity.target
            elif hierarchy.is_subtype(param.type, "room") and room not in binding.values():
                binding[param.name] = room
        if len(binding) != len(schema.params):
            logger.warning(f"Cannot bind activity {activity.name} of {human_id} to ({human_id} {activity.target} {room})")
            return
        for literal in schema.del_effects:
            facts.discard(literal.substitute(binding).atom)
        for literal in schema.add_effects:
            facts.add(literal.substitute(binding).atom)

    def apply_joint(self, w: WorldState, joint: JointAction) -> WorldState:
        """Deterministic successor of w under a recorded joint action."""
        facts = set(w.facts)
        if joint.robot is not None and joint.fault is None:
            _, _, add, delete = self.instantiate(joint.robot)
            facts -= delete
            facts |= add

        for human_id in sorted(joint.humans):
            activity = joint.humans[human_id]
            if activity is not None and activity.target is not None:
                self._apply_activity(facts, human_id, activity)

        locations = {fact[1]: fact[2] for fact in facts if fact[0] == "at-agent"}
        if self._tracks_occupancy:
            facts = {fact for fact in facts if fact[0] != OCCUPANCY_PREDICATE}
            for human_id, activity in joint.humans.items():
                if activity is not None and human_id in locations:
                    facts.add((OCCUPANCY_PREDICATE, locations[human_id]))
        if self._tracks_robot_room and self.robot_id in locations:
            facts = {fact for fact in facts if fact[0] != "robot-in"}
            facts.add(("robot-in", locations[self.robot_id]))

        return WorldState(timestep=w.timestep + 1, facts=frozenset(facts), activities=dict(joint.humans))

    def transition(self, w: WorldState, robot_action: Optional[RobotAction] = None,
                   agendas: Dict[str, Agenda] = None) -> Tuple[WorldState, JointAction]:
        key = _action_key(robot_action)
        fault = self._fault(w, key) if key is not None else None
        if fault:
            logger.warning(f"Robot fault at t={w.timestep + 1}: {fault}")
        joint = JointAction(robot=key, humans=self.activities_at(w.timestep + 1, agendas), fault=fault)
        return self.apply_joint(w, joint), joint

    def step(self, w: WorldState, robot_action: Optional[RobotAction] = None,
             agendas: Iterable[Agenda] = None) -> WorldState:
        """
        Advance one timestep.

        Args:
            w: Current world
            robot_action: Ground action, plan step or (schema, *args) key; None for a no-op
            agendas: Used instead of the simulator's agendas for this step only

        Returns:
            Successor world

        Raises:
            FaultedStep: the robot action's preconditions do not hold; the
                exception carries the no-op successor as .state
        """
        override = self._index_agendas(agendas) if agendas is not None else None
        successor, joint = self.transition(w, robot_action, override)
        if joint.fault:
            raise FaultedStep(joint.fault, timestep=successor.timestep, state=successor)
        return successor

    def run(self, plan: Plan) -> Trace:
        """
        Execute the robot's plan steps against the agendas.

        Human steps in a joint plan are predictions and are not executed.
        The trace lasts max(robot steps, last agenda timestep) steps.
        """
        robot_steps = plan.steps_for(self.robot_id)
        horizon = max(
            [len(robot_steps)] + [entry.t for agenda in self.agendas.values() for entry in agenda.script]
        )

        state = self.initial_state()
        records: List[TraceRecord] = []
        for k in range(horizon):
            action = robot_steps[k] if k < len(robot_steps) else None
            successor, joint = self.transition(state, action)
            records.append(TraceRecord(state=state, action=joint))
            state = successor

        trace = Trace(
            robot_id=self.robot_id,
            records=tuple(records),
            final_state=state,
            agendas=tuple(self.agendas[h] for h in sorted(self.agendas)),
        )
        logger.info(f"Simulated {len(records)} steps ({len(trace.faults)} faults)")
        return trace

    def generate_snapshots(self, trace: Trace) -> SnapshotSequence:
        """
        One scene graph per post-state, timesteps 1..n, with a human -> target
        edge for every scripted activity and an agent -> item edge per held item.

        Raises:
            EmptyTrace
        """
        if len(trace) == 0:
            raise EmptyTrace("Cannot generate snapshots from an empty trace")
        return SnapshotSequence(snapshots=tuple(self._snapshot(state) for state in trace.post_states()))

    def _snapshot(self, state: WorldState) -> SceneGraph:
        locations = state.agent_locations
        item_rooms = state.item_locations
        holdings = state.holdings
        holder = {item_id: agent_id for agent_id, items in holdings.items() for item_id in items}

        items = []
        for item in self.initial.items:
            room = item_rooms.get(item.id)
            if room is None and item.id in holder:
                room = locations.get(holder[item.id])
            items.append(ItemNode(
                id=item.id,
                parent_room=room or item.parent_room,
                category=item.category,
                accessible=("accessible", item.id) in state.facts,
                states=dict(item.states),
                affordable_actions=item.affordable_actions,
            ))

        agents = []
        edges = []
        for agent in self.initial.agents:
            activity = state.activities.get(agent.id)
            agents.append(AgentNode(
                id=agent.id,
                kind=agent.kind,
                parent_room=locations.get(agent.id, agent.parent_room),
                current_action=activity.name if activity else None,
                holding=tuple(holdings.get(agent.id, [])),
            ))
            if activity is not None and activity.target is not None:
                edges.append(SemanticEdge(
                    source=agent.id, target=activity.target, relation=activity.relation, timestep=state.timestep
                ))
            for item_id in holdings.get(agent.id, []):
                edges.append(SemanticEdge(
                    source=agent.id, target=item_id, relation=HOLDING_RELATION, timestep=state.timestep
                ))

        return SceneGraph(
            graph_id=self.initial.graph_id,
            timestep=state.timestep,
            floors=self.initial.floors,
            rooms=self.initial.rooms,
            items=tuple(items),
            agents=tuple(agents),
            edges=tuple(edges),
        )


def _robot_items(action: JointAction, state: WorldState, robot_id: str, item_ids: FrozenSet[str]) -> Set[str]:
    used = set(state.holdings.get(robot_id, []))
    if action.robot is not None and action.fault is None:
        used.update(arg for arg in action.robot[1:] if arg in item_ids)
    return used


def disturbance_metrics(trace: Trace) -> DisturbanceReport:
    """
    Count disturbance over the trace's post-states.

    co_occupancy_steps: the robot shares a room with a human whose activity is not idle
    item_conflicts: the robot holds or acts on an item targeted by a human's
        current or next scripted activity
    """
    agendas = {agenda.human_id: agenda for agenda in trace.agendas}
    item_ids = frozenset(
        fact[1] for record in trace.records for fact in record.state.facts if fact[0] in ("at", "accessible")
    ) | frozenset(
        fact[2] for record in trace.records for fact in record.state.facts if fact[0] == "holding"
    )

    co_occupancy = 0
    conflicts = 0
    for record, state in zip(trace.records, trace.post_states()):
        locations = state.agent_locations
        robot_room = locations.get(trace.robot_id)
        if robot_room is not None and any(
            activity is not None and locations.get(human_id) == robot_room
            for human_id, activity in state.activities.items()
        ):
            co_occupancy += 1

        needed = set()
        for human_id, activity in state.activities.items():
            if activity is not None and activity.target:
                needed.add(activity.target)
            upcoming = agendas[human_id].next_after(state.timestep) if human_id in agendas else None
            if upcoming is not None:
                needed.add(upcoming.target)
        if needed & _robot_items(record.action, state, trace.robot_id, item_ids | frozenset(needed)):
            conflicts += 1

    faulted = sum(1 for record in trace.records if record.action.fault)
    return DisturbanceReport(
        co_occupancy_steps=co_occupancy,
        item_conflicts=conflicts,
        steps=len(trace.records),
        faulted_steps=faulted,
    )


def trace_to_lines(trace: Trace) -> List[str]:
    """One JSON object per recorded step: state before, joint action, state after."""
    lines = []
    for record, after in zip(trace.records, trace.post_states()):
        entry = {
            "t": after.timestep,
            "before": record.state.sorted_facts(),
            "robot": list(record.action.robot) if record.action.robot else None,
            "fault": record.action.fault,
            "humans": {
                human_id: (
                    {"activity": a.name, "target": a.target, "relation": a.relation} if a else None
                )
                for human_id, a in sorted(record.action.humans.items())
            },
            "after": after.sorted_facts(),
        }
        lines.append(json.dumps(entry, sort_keys=True))
    return lines


def write_trace(path: Union[str, Path], trace: Trace) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in trace_to_lines(trace)), encoding="utf-8")
    return path


def report_to_dict(report: DisturbanceReport) -> Dict[str, int]:
    return {
        "co_occupancy_steps": report.co_occupancy_steps,
        "item_conflicts": report.item_conflicts,
        "steps": report.steps,
        "faulted_steps": report.faulted_steps,
    }
