import pytest

from conftest import WATER_REPLY, data_path
from core.documents import read_text
from core.exceptions import (
    DuplicateObject,
    GroundingError,
    IllTypedGoal,
    UncoveredGoalWithoutSynthesis,
    UndeclaredStatePredicate,
    UnknownRoom,
)
from core.grounding import (
    add_agent,
    add_robot_goal,
    add_rooms,
    check_problem,
    empty_problem,
    load_task,
    set_init_state,
    state_predicate,
    strip_occupancy_preconditions,
    transform,
)
from core.predictor import HeuristicBackend, LLMBackend
from core.scene_graph import room_topology
from models.literal import Literal
from models.scene_graph import AgentKind, AgentNode, ItemNode


def lit(text):
    return Literal.parse(text)


def fetch_problem(load_scene, household_domain):
    frame = load_scene("fetch").latest
    problem = add_rooms(empty_problem("fetch", "household"), room_topology(frame))
    return frame, add_agent(problem, frame.agents[0], household_domain)


def test_add_rooms_is_symmetric(load_scene):
    topology = room_topology(load_scene("fetch").latest)
    problem = add_rooms(empty_problem("fetch", "household"), topology)

    assert problem.objects == {"a": "room", "b": "room"}
    assert problem.init == {lit("(connected a b)"), lit("(connected b a)")}


def test_add_robot(load_scene, household_domain):
    _, problem = fetch_problem(load_scene, household_domain)

    assert problem.robot_id == "r1"
    assert problem.goals == {"r1": frozenset()}
    assert {lit("(at-agent r1 b)"), lit("(is-robot r1)"), lit("(robot-in b)")} <= problem.init


def test_add_agent_without_domain_skips_optional_literals(load_scene):
    frame = load_scene("fetch").latest
    problem = add_agent(empty_problem("fetch", "household"), frame.agents[0])

    assert problem.init == {lit("(at-agent r1 b)")}


def test_busy_human_marks_room(household_domain):
    cook = AgentNode(id="h1", kind=AgentKind.HUMAN, parent_room="a", current_action="cooking")
    idle = AgentNode(id="h2", kind=AgentKind.HUMAN, parent_room="b")

    problem = add_agent(empty_problem("p", "household"), cook, household_domain)
    problem = add_agent(problem, idle, household_domain)

    assert lit("(human-active-in a)") in problem.init
    assert lit("(human-active-in b)") not in problem.init
    assert problem.human_ids == ["h1", "h2"]
    with pytest.raises(DuplicateObject):
        add_agent(problem, idle, household_domain)


def test_set_init_state(load_scene, household_domain):
    frame, problem = fetch_problem(load_scene, household_domain)
    topology = room_topology(frame)

    fridge = ItemNode(id="fridge", parent_room="a", category="fridge", states={"door": "closed"})
    vase = ItemNode(id="vase", parent_room="b", category="vase", accessible=False)
    problem = set_init_state(problem, fridge, topology, household_domain)
    problem = set_init_state(problem, vase, topology, household_domain)

    assert {lit("(at fridge a)"), lit("(accessible fridge)"), lit("(door-closed fridge)")} <= problem.init
    assert lit("(at vase b)") in problem.init
    assert lit("(accessible vase)") not in problem.init
    assert problem.objects["fridge"] == "item"


def test_held_item_has_no_location(load_scene, household_domain):
    frame, problem = fetch_problem(load_scene, household_domain)

    problem = set_init_state(problem, frame.items[0], room_topology(frame), household_domain, held=True)

    assert not any(literal.predicate == "at" for literal in problem.init)


def test_set_init_state_errors(load_scene, household_domain):
    frame, problem = fetch_problem(load_scene, household_domain)
    topology = room_topology(frame)

    with pytest.raises(UnknownRoom):
        set_init_state(problem, ItemNode(id="cup", parent_room="attic", category="mug"), topology)
    with pytest.raises(UndeclaredStatePredicate):
        set_init_state(problem, ItemNode(id="lamp", parent_room="a", category="lamp", states={"power": "on"}),
                       topology, household_domain)
    with pytest.raises(DuplicateObject):
        set_init_state(problem, ItemNode(id="r1", parent_room="a", category="box"), topology)


def test_state_predicate_names():
    assert state_predicate("door", "closed") == "door-closed"
    assert state_predicate("Water_Level", "Low") == "water-level-low"


def test_robot_goal_must_type_check(load_scene, household_domain):
    frame, problem = fetch_problem(load_scene, household_domain)
    problem = set_init_state(problem, frame.items[0], room_topology(frame), household_domain)

    with pytest.raises(IllTypedGoal):
        add_robot_goal(problem, [lit("(at a x)")], household_domain)
    with pytest.raises(IllTypedGoal):
        add_robot_goal(problem, [lit("(not (at x b))")], household_domain)
    assert add_robot_goal(problem, [lit("(at x b)")], household_domain).goals["r1"] == {lit("(at x b)")}


def test_transform_fetch(household_kb, load_scene):
    backend = HeuristicBackend(household_kb.goal_templates)

    domain, problem, report = transform(household_kb, load_scene("fetch"), "passthrough", backend,
                                        robot_goal=[lit("(at x b)")])

    assert domain.name == "household"
    assert problem.name == "fetch"
    assert problem.objects == {"a": "room", "b": "room", "x": "item", "r1": "agent"}
    assert problem.goals == {"r1": frozenset([lit("(at x b)")])}
    assert report.distributions == {}
    assert check_problem(domain, problem) == []


def test_transform_allensville(household_kb, load_scene):
    backend = HeuristicBackend(household_kb.goal_templates, gamma=0.5)
    _, goal = load_task(read_text(data_path("tasks", "allensville.json")))

    domain, problem, report = transform(household_kb, load_scene("allensville"), "passthrough", backend,
                                        robot_goal=goal)

    assert problem.partition_order() == ["r1", "alice", "bob"]
    assert problem.goals["alice"] == {lit("(cooked stove)")}
    assert problem.goals["bob"] == {lit("(watched tv)")}
    assert problem.goals["r1"] == {lit("(at towel bedroom)")}
    assert {lit("(human-active-in kitchen)"), lit("(human-active-in living_room)")} <= problem.init
    assert lit("(door-closed fridge)") in problem.init
    assert lit("(accessible table)") not in problem.init
    assert report.selections["alice"].probability == pytest.approx(5 / 7)
    assert report.to_dict()["humans"]["bob"]["selected"]["goal"] == ["(watched tv)"]


def test_transform_reports_failing_stage(household_kb, load_scene):
    backend = HeuristicBackend(household_kb.goal_templates)

    with pytest.raises(UncoveredGoalWithoutSynthesis) as excinfo:
        transform(household_kb, load_scene("garden"), "passthrough", backend)
    assert excinfo.value.stage == "synthesize"
    assert str(excinfo.value).startswith("[synthesize]")


def test_transform_with_synthesis(household_kb, load_scene, fake_gateway):
    gateway, connector = fake_gateway([
        {"candidates": [{"goal": ["(watered plant)"], "weight": 1}]},
        WATER_REPLY,
    ])
    backend = LLMBackend(gateway, gateway.default_store)

    domain, problem, report = transform(household_kb, load_scene("garden"), "passthrough", backend)

    assert domain.action("water") is not None
    assert problem.goals["carol"] == {lit("(watered plant)")}
    assert report.synthesized_predicates == {"carol": ["watered"]}
    assert report.synthesized_actions == {"carol": ["water"]}
    assert report.selections["carol"].covered
    assert len(connector.prompts) == 2


def test_unknown_robot_goal_object_fails_grounding(household_kb, load_scene):
    backend = HeuristicBackend(household_kb.goal_templates)

    with pytest.raises(GroundingError) as excinfo:
        transform(household_kb, load_scene("fetch"), "passthrough", backend, robot_goal=[lit("(at ghost b)")])
    assert excinfo.value.stage == "goal"


def test_strip_occupancy_preconditions(household_domain):
    stripped = strip_occupancy_preconditions(household_domain)

    goto = stripped.action("goto")
    assert not any(literal.predicate == "human-active-in" for literal in goto.preconditions)
    assert lit("(is-robot ?a)") in goto.preconditions
    assert stripped.action("cook").preconditions == household_domain.action("cook").preconditions
    assert "negative-preconditions" in stripped.requirements
