import json

import pytest

from conftest import scene_document
from core.exceptions import EmptySequence, HierarchyError, MissingRobot, SchemaError, UnknownAgent
from core.scene_graph import (
    build_history,
    document_violations,
    get_edges_and_neighbors,
    get_robot_node,
    load_scene_graph,
    load_snapshot_sequence,
    room_topology,
    serialize_scene_graph,
    validate_hierarchy,
)
from models.scene_graph import AgentKind, SnapshotSequence


def test_minimal_scene_loads(load_scene):
    seq = load_scene("minimal")
    sg = seq.latest

    assert len(seq) == 1
    assert sg.items == ()
    assert sg.edges == ()
    assert get_robot_node(sg).id == "r1"


def test_allensville_layers(load_scene):
    seq = load_scene("allensville")

    assert len(seq) == 3
    assert seq.horizon == 3
    latest = seq.latest
    assert len(latest.floors) == 1
    assert len(latest.rooms) == 6
    assert len(latest.items) == 12
    assert [h.id for h in latest.humans()] == ["alice", "bob"]
    assert all(edge.timestep == 3 for edge in latest.edges)


def test_dangling_room_parent_is_rejected():
    doc = scene_document(rooms=[{"id": "a", "parent_floor": "f9", "neighbors": []}])

    with pytest.raises(HierarchyError) as excinfo:
        load_scene_graph(doc)
    assert "a" in excinfo.value.offending_ids
    assert "f9" in excinfo.value.offending_ids


def test_asymmetric_adjacency_is_rejected():
    doc = scene_document(rooms=[
        {"id": "a", "parent_floor": "f1", "neighbors": ["b"]},
        {"id": "b", "parent_floor": "f1", "neighbors": []},
    ])

    with pytest.raises(HierarchyError, match="asymmetric"):
        load_scene_graph(doc)


def test_duplicate_ids_are_rejected():
    doc = scene_document(items=[{"id": "a", "parent_room": "a", "category": "box"}])

    with pytest.raises(HierarchyError, match="duplicate id"):
        load_scene_graph(doc)


def test_missing_robot():
    doc = scene_document(agents=[{"id": "h1", "kind": "human", "parent_room": "a"}])

    with pytest.raises(MissingRobot):
        load_scene_graph(doc)


def test_held_item_must_be_in_holder_room():
    doc = scene_document(
        items=[{"id": "cup", "parent_room": "b", "category": "mug"}],
        agents=[{"id": "r1", "kind": "robot", "parent_room": "a", "holding": ["cup"]}],
    )

    with pytest.raises(HierarchyError, match="held item elsewhere"):
        load_scene_graph(doc)


def test_malformed_documents_raise_schema_error():
    with pytest.raises(SchemaError):
        load_scene_graph("{not json")

    doc = scene_document()
    del doc["rooms"]
    with pytest.raises(SchemaError):
        load_scene_graph(json.dumps(doc))


@pytest.mark.parametrize("room_id", ["küche", "room.1", "Hall", "1st", "living room"])
def test_ids_must_be_plain_names(room_id):
    doc = scene_document(rooms=[
        {"id": room_id, "parent_floor": "f1", "neighbors": []},
        {"id": "b", "parent_floor": "f1", "neighbors": []},
    ])

    with pytest.raises(SchemaError):
        load_scene_graph(json.dumps(doc))


def test_state_values_must_be_plain_names():
    doc = scene_document(items=[{"id": "lamp", "parent_room": "a", "category": "lamp", "states": {"power": "on/off"}}])

    with pytest.raises(SchemaError):
        load_scene_graph(json.dumps(doc))


def test_get_robot_node_filters_humans(load_scene):
    sg = load_scene("allensville").latest

    robot = get_robot_node(sg)
    assert robot.id == "r1"
    assert robot.kind == AgentKind.ROBOT
    assert robot.parent_room == "hallway"

    without_robot = sg.model_copy(update={"agents": tuple(sg.humans())})
    with pytest.raises(MissingRobot):
        get_robot_node(without_robot)


def test_get_edges_and_neighbors(load_scene):
    first = load_scene("allensville").snapshots[0]

    edges, items = get_edges_and_neighbors(first, "alice")
    assert {(e.source, e.target, e.relation) for e in edges} == {("alice", "stove", "using")}
    assert items == {"stove"}

    with pytest.raises(UnknownAgent):
        get_edges_and_neighbors(first, "r1")
    with pytest.raises(UnknownAgent):
        get_edges_and_neighbors(first, "nobody")


def test_build_history_is_union_over_snapshots(load_scene):
    seq = load_scene("allensville")

    history = build_history(seq, "alice")
    assert history.horizon == 3
    assert history.item_events == ((1, "stove"), (2, "mug"), (3, "stove"))
    assert [t for t, _ in history.edge_events] == [1, 2, 3]

    with pytest.raises(EmptySequence):
        build_history(SnapshotSequence(), "alice")


def test_sequence_timestep_gap_is_rejected():
    docs = [scene_document(timestep=1), scene_document(timestep=3)]

    with pytest.raises(HierarchyError, match="timestep gap"):
        load_snapshot_sequence(json.dumps(docs))


def test_sequence_node_identity_must_be_stable():
    second = scene_document(timestep=2, items=[{"id": "cup", "parent_room": "a", "category": "mug"}])
    docs = [scene_document(timestep=1), second]

    with pytest.raises(HierarchyError, match="node identity changed"):
        load_snapshot_sequence(docs)


def test_document_violations_lists_every_problem():
    doc = scene_document(rooms=[
        {"id": "a", "parent_floor": "f1", "neighbors": ["b"]},
        {"id": "b", "parent_floor": "f2", "neighbors": []},
    ])

    found = document_violations(json.dumps(doc))
    assert any("asymmetric" in v for v in found)
    assert any("dangling parent" in v for v in found)
    assert document_violations(scene_document()) == []


def test_serialize_round_trip(load_scene):
    sg = load_scene("allensville").latest

    assert load_scene_graph(serialize_scene_graph(sg)) == sg
    assert validate_hierarchy(sg) == []


def test_room_topology_keeps_isolated_rooms(load_scene):
    topology = room_topology(load_scene("minimal").latest)
    assert list(topology.nodes) == ["kitchen"]
    assert topology.number_of_edges() == 0

    house = room_topology(load_scene("allensville").latest)
    assert house.has_edge("hallway", "kitchen")
    assert house.has_edge("kitchen", "hallway")
    assert not house.has_edge("bathroom", "kitchen")
