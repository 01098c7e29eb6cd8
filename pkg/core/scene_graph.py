"""
Scene graph loading, validation and queries.

Snapshots arrive pre-built as JSON documents (see schemas/scene_graph.schema.json);
a snapshot sequence is a JSON array of such documents ordered by timestep.
"""

from collections import Counter
from typing import Any, Dict, List, Set, Tuple
import logging

import networkx as nx

from core.documents import Document, decode, load_schema, validate_against
from core.exceptions import (
    EmptySequence,
    HierarchyError,
    MissingRobot,
    SchemaError,
    UnknownAgent,
)
from models.scene_graph import (
    AgentKind,
    AgentNode,
    FloorNode,
    InteractionHistory,
    ItemNode,
    RoomNode,
    SceneGraph,
    SemanticEdge,
    SnapshotSequence,
)

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

Violation = Tuple[str, List[str]]


def _build(data: Dict[str, Any]) -> SceneGraph:
    timestep = data["timestep"]
    return SceneGraph(
        graph_id=data["graph_id"],
        timestep=timestep,
        floors=tuple(FloorNode(id=f["id"]) for f in data.get("floors", [])),
        rooms=tuple(
            RoomNode(id=r["id"], parent_floor=r["parent_floor"], neighbors=tuple(r.get("neighbors", [])))
            for r in data.get("rooms", [])
        ),
        items=tuple(
            ItemNode(
                id=i["id"],
                parent_room=i["parent_room"],
                category=i["category"],
                accessible=i.get("accessible", True),
                states=dict(i.get("states", {})),
                affordable_actions=tuple(i.get("affordable_actions", [])),
            )
            for i in data.get("items", [])
        ),
        agents=tuple(
            AgentNode(
                id=a["id"],
                kind=AgentKind(a["kind"]),
                parent_room=a["parent_room"],
                current_action=a.get("current_action"),
                holding=tuple(a.get("holding", [])),
            )
            for a in data.get("agents", [])
        ),
        edges=tuple(
            SemanticEdge(source=e["source"], target=e["target"], relation=e["relation"], timestep=timestep)
            for e in data.get("edges", [])
        ),
    )


def _raise_for(violations: List[Violation], label: str) -> None:
    for rule, ids in violations:
        if rule == "missing robot":
            raise MissingRobot(f"{label} has no agent with kind=robot")
    rule, ids = violations[0]
    message = _format(rule, ids)
    logger.error(f"{label} rejected: {message}")
    raise HierarchyError(f"{label} violates hierarchy: {message}", offending_ids=ids)


def _format(rule: str, ids: List[str]) -> str:
    return f"{rule}: {', '.join(ids)}" if ids else rule


def load_scene_graph(document: Document) -> SceneGraph:
    """
    Load and validate one scene graph snapshot.

    Args:
        document: JSON text (or already decoded dict) of one snapshot

    Returns:
        SceneGraph satisfying every hierarchy invariant

    Raises:
        SchemaError, HierarchyError, MissingRobot
    """
    data = decode(document, "scene graph")
    if not isinstance(data, dict):
        raise SchemaError("scene graph document must be a JSON object")
    validate_against(data, load_schema("scene_graph"), "scene graph")
    graph = _build(data)

    violations = _violations(graph)
    if violations:
        _raise_for(violations, f"scene graph {graph.graph_id}@{graph.timestep}")
    logger.info(
        f"Loaded scene graph {graph.graph_id}@{graph.timestep}: "
        f"{len(graph.rooms)} rooms, {len(graph.items)} items, {len(graph.agents)} agents"
    )
    return graph


def load_snapshot_sequence(document: Document) -> SnapshotSequence:
    """
    Load a snapshot sequence. A single snapshot object is accepted as a
    sequence of length one.

    Raises:
        SchemaError, HierarchyError, MissingRobot
    """
    data = decode(document, "snapshot sequence")
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list):
        raise SchemaError("snapshot sequence must be a JSON array of scene graphs")

    sequence = SnapshotSequence(snapshots=tuple(load_scene_graph(entry) for entry in data))
    violations = sequence_violations(sequence)
    if violations:
        raise HierarchyError(f"snapshot sequence is inconsistent: {violations[0]}")
    return sequence


def serialize_scene_graph(sg: SceneGraph) -> Dict[str, Any]:
    """Inverse of load_scene_graph."""
    return {
        "graph_id": sg.graph_id,
        "timestep": sg.timestep,
        "floors": [{"id": f.id} for f in sg.floors],
        "rooms": [
            {"id": r.id, "parent_floor": r.parent_floor, "neighbors": list(r.neighbors)}
            for r in sg.rooms
        ],
        "items": [
            {
                "id": i.id,
                "parent_room": i.parent_room,
                "category": i.category,
                "accessible": i.accessible,
                "states": dict(i.states),
                "affordable_actions": list(i.affordable_actions),
            }
            for i in sg.items
        ],
        "agents": [
            {
                "id": a.id,
                "kind": a.kind.value,
                "parent_room": a.parent_room,
                "current_action": a.current_action,
                "holding": list(a.holding),
            }
            for a in sg.agents
        ],
        "edges": [{"source": e.source, "target": e.target, "relation": e.relation} for e in sg.edges],
    }


def _violations(sg: SceneGraph) -> List[Violation]:
    found: List[Violation] = []

    counts = Counter(sg.node_ids())
    for node_id in sorted(node_id for node_id, count in counts.items() if count > 1):
        found.append(("duplicate id", [node_id]))

    floor_ids = {f.id for f in sg.floors}
    room_ids = {r.id for r in sg.rooms}
    item_ids = {i.id for i in sg.items}
    all_ids = set(counts)

    for room in sg.rooms:
        if room.parent_floor not in floor_ids:
            found.append(("dangling parent", [room.id, room.parent_floor]))
        if room.id in room.neighbors:
            found.append(("self neighbor", [room.id]))

    neighbors = {room.id: set(room.neighbors) for room in sg.rooms}
    for room in sg.rooms:
        for other in room.neighbors:
            if other == room.id:
                continue
            if other not in room_ids:
                found.append(("unknown neighbor", [room.id, other]))
            elif room.id not in neighbors.get(other, set()):
                found.append(("asymmetric neighbors", [room.id, other]))

    for item in sg.items:
        if item.parent_room not in room_ids:
            found.append(("dangling parent", [item.id, item.parent_room]))

    robots = [agent.id for agent in sg.agents if agent.is_robot]
    if not robots:
        found.append(("missing robot", []))
    elif len(robots) > 1:
        found.append(("multiple robots", sorted(robots)))

    items_by_id = {item.id: item for item in sg.items}
    for agent in sg.agents:
        if agent.parent_room not in room_ids:
            found.append(("dangling parent", [agent.id, agent.parent_room]))
        for held in agent.holding:
            if held not in item_ids:
                found.append(("unknown held item", [agent.id, held]))
            elif items_by_id[held].parent_room != agent.parent_room:
                found.append(("held item elsewhere", [agent.id, held]))

    for edge in sg.edges:
        for endpoint in (edge.source, edge.target):
            if endpoint not in all_ids:
                found.append(("dangling edge endpoint", [endpoint]))
        if not edge.relation.strip():
            found.append(("empty relation", [edge.source, edge.target]))
        if edge.timestep != sg.timestep:
            found.append(("edge timestep mismatch", [edge.source, edge.target]))

    return found


def validate_hierarchy(sg: SceneGraph) -> List[str]:
    """
    Check every scene graph invariant.

    Args:
        sg: Scene graph, possibly invalid

    Returns:
        One "rule: ids" description per violation; empty iff valid
    """
    return [_format(rule, ids) for rule, ids in _violations(sg)]


def sequence_violations(seq: SnapshotSequence) -> List[str]:
    """Cross-snapshot invariants: timesteps 1..tn, stable node ids and robot."""
    found = []
    for expected, snapshot in enumerate(seq, start=1):
        if snapshot.timestep != expected:
            found.append(f"timestep gap: expected {expected}, got {snapshot.timestep}")
            break

    if len(seq) > 1:
        reference = seq.snapshots[0]
        reference_ids = set(reference.node_ids())
        reference_robot = get_robot_node(reference).id
        for snapshot in seq.snapshots[1:]:
            ids = set(snapshot.node_ids())
            if ids != reference_ids:
                changed = sorted(ids.symmetric_difference(reference_ids))
                found.append(f"node identity changed at t={snapshot.timestep}: {', '.join(changed)}")
            if get_robot_node(snapshot).id != reference_robot:
                found.append(f"robot changed at t={snapshot.timestep}")
    return found


def get_robot_node(sg: SceneGraph) -> AgentNode:
    """
    Return the unique robot agent.

    Raises:
        MissingRobot: no robot (or more than one) in the graph
    """
    robots = [agent for agent in sg.agents if agent.is_robot]
    if len(robots) != 1:
        raise MissingRobot(f"Expected exactly one robot in {sg.graph_id}, found {len(robots)}")
    return robots[0]


def get_edges_and_neighbors(snapshot: SceneGraph, human_id: str) -> Tuple[Set[SemanticEdge], Set[str]]:
    """
    Semantic edges incident to a human and the items at their other end.

    Args:
        snapshot: One scene graph
        human_id: Identifier of a kind=human agent

    Returns:
        (edges, item ids)

    Raises:
        UnknownAgent: human_id is not a human in this snapshot
    """
    agent = snapshot.agent(human_id)
    if agent is None or not agent.is_human:
        raise UnknownAgent(f"{human_id} is not a human in {snapshot.graph_id}@{snapshot.timestep}")

    item_ids = {item.id for item in snapshot.items}
    edges = {e for e in snapshot.edges if e.source == human_id or e.target == human_id}
    items = set()
    for edge in edges:
        other = edge.target if edge.source == human_id else edge.source
        if other in item_ids:
            items.add(other)
    return edges, items


def build_history(seq: SnapshotSequence, human_id: str) -> InteractionHistory:
    """
    Union of a human's edges and touched items over every snapshot, ordered
    by timestep.

    Raises:
        EmptySequence, UnknownAgent
    """
    if len(seq) == 0:
        raise EmptySequence(f"Cannot build history for {human_id} from an empty sequence")

    edge_events = []
    item_events = []
    for snapshot in seq:
        edges, items = get_edges_and_neighbors(snapshot, human_id)
        ordered = sorted(edges, key=lambda e: (e.source, e.target, e.relation))
        edge_events.extend((snapshot.timestep, edge) for edge in ordered)
        item_events.extend((snapshot.timestep, item) for item in sorted(items))

    return InteractionHistory(
        human_id=human_id,
        horizon=seq.horizon,
        edge_events=tuple(edge_events),
        item_events=tuple(item_events),
    )


def room_topology(sg: SceneGraph) -> nx.Graph:
    """Undirected room adjacency; isolated rooms are kept as nodes."""
    graph = nx.Graph()
    room_ids = {room.id for room in sg.rooms}
    for room in sg.rooms:
        graph.add_node(room.id, floor=room.parent_floor)
    for room in sg.rooms:
        for other in room.neighbors:
            if other in room_ids and other != room.id:
                graph.add_edge(room.id, other)
    return graph


def document_violations(document: Document) -> List[str]:
    """
    Every hierarchy and sequence violation of a snapshot document, without
    raising on the first one.

    Raises:
        SchemaError: the document is not well-formed
    """
    data = decode(document, "snapshot sequence")
    entries = [data] if isinstance(data, dict) else data
    if not isinstance(entries, list):
        raise SchemaError("snapshot sequence must be a JSON array of scene graphs")

    schema = load_schema("scene_graph")
    graphs = []
    found = []
    for entry in entries:
        validate_against(entry, schema, "scene graph")
        graph = _build(entry)
        graphs.append(graph)
        found.extend(f"{graph.graph_id}@{graph.timestep}: {v}" for v in validate_hierarchy(graph))
    if not found:
        found.extend(sequence_violations(SnapshotSequence(snapshots=tuple(graphs))))
    return found
