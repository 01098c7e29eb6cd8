import json
from pathlib import Path

import pytest

from conftest import FakeLLMConnector, data_path
from core.documents import read_text
from core.exceptions import (
    ExtractionInvalid,
    ReplayMiss,
    TypeMismatch,
    UncoveredGoalWithoutSynthesis,
    UnknownAction,
    Unsolvable,
)
from core.llm_gateway import LLMGateway
from core.pddl import parse_domain, parse_problem
from core.pipeline import PipelineEngine
from core.planner import ground_task, load_plan, validate_plan
from main import main, exit_code_for
from models.pipeline import PipelineConfig
from models.replay_store import ReplayStore

KB = data_path("household.kb.json")


def inputs(name, *agendas):
    args = ["--scene", data_path("scenes", f"{name}.json"), "--knowledge", KB,
            "--task", data_path("tasks", f"{name}.json")]
    for agenda in agendas:
        args += ["--agenda", data_path("agendas", f"{agenda}.json")]
    return args


def read_json(path):
    return json.loads(Path(path).read_text())


def test_validate_clean_inputs(capsys):
    code = main(["validate", *inputs("allensville", "allensville_alice", "allensville_bob")])

    assert code == 0
    assert "No violations" in capsys.readouterr().out


def test_validate_lists_violations(capsys):
    code = main(["validate", "--scene", data_path("scenes", "asymmetric.json"), "--knowledge", KB])

    assert code == 1
    assert "asymmetric" in capsys.readouterr().out


def test_validate_agenda_for_unknown_item(tmp_path):
    agenda = tmp_path / "agenda.json"
    agenda.write_text(json.dumps({"human_id": "h1", "script": [{"t": 1, "activity": "cook", "target": "oven"}]}))

    code = main(["validate", "--scene", data_path("scenes", "conflict.json"), "--knowledge", KB,
                 "--agenda", str(agenda)])

    assert code == 1


def test_validate_unreadable_inputs(tmp_path):
    assert main(["validate", "--scene", str(tmp_path / "missing.json")]) == 2

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["validate", "--scene", str(broken)]) == 2


def test_pipeline_fetch(tmp_path, capsys):
    out = tmp_path / "out"

    code = main(["pipeline", *inputs("fetch"), "--out", str(out)])

    assert code == 0
    plan = read_json(out / "plan.json")
    assert [step["action"] for step in plan["steps"]] == ["goto", "pick", "goto", "drop"]
    assert "runtime" not in plan["metadata"]
    assert (out / "fetch.plan").read_text().splitlines()[0] == "(goto r1 b a)"
    assert read_json(out / "prediction_report.json")["humans"] == {}
    assert "plan steps" in capsys.readouterr().out


def test_artifacts_parse_back(tmp_path):
    out = tmp_path / "out"
    assert main(["pipeline", *inputs("conflict", "conflict_h1"), "--out", str(out)]) == 0

    domain = parse_domain(read_text(str(out / "conflict.domain.pddl")))
    problem = parse_problem(read_text(str(out / "conflict.problem.pddl")), domain)
    plan = load_plan(read_text(str(out / "plan.json")))

    assert validate_plan(ground_task(domain, problem), plan).is_valid
    assert problem.goals["h1"] == parse_problem(read_text(str(out / "conflict.problem.pddl"))).goals["h1"]
    assert len((out / "trace.jsonl").read_text().splitlines()) == 6


def test_occupancy_contrast(tmp_path):
    aware, blind = tmp_path / "aware", tmp_path / "blind"

    assert main(["pipeline", *inputs("conflict", "conflict_h1"), "--out", str(aware)]) == 0
    assert main(["pipeline", *inputs("conflict", "conflict_h1"), "--ignore-occupancy", "--out", str(blind)]) == 0

    assert read_json(aware / "disturbance.json")["co_occupancy_steps"] == 0
    assert read_json(blind / "disturbance.json")["co_occupancy_steps"] >= 1
    assert len(read_json(blind / "plan.json")["steps"]) < len(read_json(aware / "plan.json")["steps"])


def test_allensville_pipeline(tmp_path):
    out = tmp_path / "out"

    code = main(["pipeline", *inputs("allensville", "allensville_alice", "allensville_bob"),
                 "--strategy", "gbfs", "--out", str(out)])

    assert code == 0
    humans = read_json(out / "prediction_report.json")["humans"]
    assert humans["alice"]["selected"]["goal"] == ["(cooked stove)"]
    assert humans["bob"]["selected"]["goal"] == ["(watched tv)"]
    disturbance = read_json(out / "disturbance.json")
    assert disturbance["co_occupancy_steps"] == 0
    assert disturbance["item_conflicts"] == 0
    assert disturbance["faulted_steps"] == 0


def test_runs_are_deterministic(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"

    for out in (first, second):
        assert main(["pipeline", *inputs("conflict", "conflict_h1"), "--seed", "3", "--out", str(out)]) == 0

    names = sorted(path.name for path in first.iterdir())
    assert names == sorted(path.name for path in second.iterdir())
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_uncovered_goal_exits_with_prediction_code(tmp_path, capsys):
    code = main(["pipeline", *inputs("garden"), "--out", str(tmp_path)])

    assert code == 4
    assert "stage synthesize" in capsys.readouterr().out


def test_stage_commands_chain(tmp_path):
    ground_out, plan_out, sim_out = tmp_path / "ground", tmp_path / "plan", tmp_path / "sim"

    assert main(["ground", *inputs("conflict"), "--out", str(ground_out)]) == 0
    assert main(["plan", "--domain", str(ground_out / "conflict.domain.pddl"),
                 "--problem", str(ground_out / "conflict.problem.pddl"), "--out", str(plan_out)]) == 0
    assert main(["simulate", "--scene", data_path("scenes", "conflict.json"),
                 "--domain", str(ground_out / "conflict.domain.pddl"),
                 "--plan", str(plan_out / "plan.json"),
                 "--agenda", data_path("agendas", "conflict_h1.json"),
                 "--out", str(sim_out)]) == 0

    assert read_json(sim_out / "disturbance.json")["steps"] == 6
    assert (sim_out / "trace.jsonl").exists()


def test_ill_typed_problem_is_bad_input(tmp_path):
    ground_out = tmp_path / "ground"
    assert main(["ground", *inputs("conflict"), "--out", str(ground_out)]) == 0
    problem = ground_out / "conflict.problem.pddl"
    problem.write_text(problem.read_text().replace(" - item", " - room"))

    code = main(["plan", "--domain", str(ground_out / "conflict.domain.pddl"), "--problem", str(problem),
                 "--out", str(tmp_path / "plan")])

    assert code == 2


def test_plan_without_inputs_is_bad_input(tmp_path):
    assert main(["plan", "--out", str(tmp_path)]) == 2


def test_invalid_option_values(tmp_path):
    assert main(["pipeline", *inputs("fetch"), "--gamma", "0", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["pipeline", "--strategy", "dfs"])


def test_llm_predictions_replay(tmp_path):
    fixtures = tmp_path / "fixtures"
    replies = [
        {"candidates": [{"goal": ["(cooked stove)"], "weight": 2}, {"goal": ["(washed mug)"], "weight": 1}]},
        {"candidates": [{"goal": ["(watched tv)"], "weight": 1}]},
    ]
    config = PipelineConfig(
        scene=data_path("scenes", "allensville.json"),
        knowledge=KB,
        backend="llm",
        out=str(tmp_path / "recorded"),
    )
    connector = FakeLLMConnector(replies)
    gateway = LLMGateway(connector, ReplayStore(mode="record", fixtures_path=str(fixtures)))
    recorded = PipelineEngine(config, gateway=gateway).predict()

    assert len(connector.prompts) == 2
    assert recorded.selections["alice"].probability == pytest.approx(2 / 3)

    replay_out = tmp_path / "replayed"
    code = main(["predict", "--scene", data_path("scenes", "allensville.json"), "--knowledge", KB,
                 "--backend", "llm", "--llm-mode", "replay", "--fixtures", str(fixtures),
                 "--out", str(replay_out)])

    assert code == 0
    assert (replay_out / "prediction_report.json").read_bytes() == \
        (tmp_path / "recorded" / "prediction_report.json").read_bytes()


def test_llm_replay_pipeline_is_deterministic(tmp_path):
    fixtures = tmp_path / "fixtures"
    replies = [
        {"candidates": [{"goal": ["(cooked stove)"], "weight": 3}, {"goal": ["(washed mug)"], "weight": 1}]},
        {"candidates": [{"goal": ["(watched tv)"], "weight": 1}]},
    ]
    config = PipelineConfig(
        scene=data_path("scenes", "allensville.json"),
        knowledge=KB,
        task=data_path("tasks", "allensville.json"),
        agendas=(data_path("agendas", "allensville_alice.json"), data_path("agendas", "allensville_bob.json")),
        backend="llm",
        strategy="gbfs",
        out=str(tmp_path / "recorded"),
    )
    connector = FakeLLMConnector(replies)
    PipelineEngine(config, gateway=LLMGateway(connector, ReplayStore(mode="record", fixtures_path=str(fixtures)))).run()
    assert len(connector.prompts) == 2

    first, second = tmp_path / "first", tmp_path / "second"
    for out in (first, second):
        code = main(["pipeline", *inputs("allensville", "allensville_alice", "allensville_bob"),
                     "--backend", "llm", "--llm-mode", "replay", "--fixtures", str(fixtures),
                     "--strategy", "gbfs", "--seed", "5", "--out", str(out)])
        assert code == 0

    names = sorted(path.name for path in first.iterdir())
    assert names == sorted(path.name for path in second.iterdir())
    assert "prediction_report.json" in names
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert read_json(first / "prediction_report.json")["humans"]["alice"]["selected"]["goal"] == ["(cooked stove)"]


def test_replay_miss_exits_with_gateway_code(tmp_path):
    code = main(["predict", "--scene", data_path("scenes", "allensville.json"), "--knowledge", KB,
                 "--backend", "llm", "--llm-mode", "replay", "--fixtures", str(tmp_path / "empty"),
                 "--out", str(tmp_path / "out")])

    assert code == 5


def test_exit_code_table():
    assert exit_code_for(ReplayMiss("miss")) == 5
    assert exit_code_for(ExtractionInvalid("bad")) == 5
    assert exit_code_for(UncoveredGoalWithoutSynthesis("uncovered")) == 4
    assert exit_code_for(Unsolvable("stuck")) == 3
    assert exit_code_for(TypeMismatch("ill-typed")) == 2
    assert exit_code_for(UnknownAction("fly")) == 2
    assert exit_code_for(ValueError("odd")) == 2
