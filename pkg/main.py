#!/usr/bin/env python3
"""
awareplan command line

    awareplan validate|predict|ground|plan|simulate|pipeline [options]

Exit codes:
    0  success
    1  validation found violations
    2  unreadable or malformed input
    3  planning failure (unsolvable, resource limit, explosion guard)
    4  prediction failure
    5  LLM gateway failure
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import argparse
import logging
from typing import List, Optional

import pandas as pd
from pydantic import ValidationError

from config import Config
from core.documents import read_text
from core.exceptions import (
    AwarePlanError,
    ExtractionInvalid,
    GatewayError,
    KnowledgeError,
    PlanningError,
    PredictionError,
    SimulationError,
    TypeMismatch,
    UnknownAction,
)
from core.knowledge_base import check_affordances, check_agent_actions, load_knowledge
from core.pipeline import PipelineEngine
from core.scene_graph import document_violations, load_snapshot_sequence
from core.simulator import HouseholdSimulator, load_agenda
from models.knowledge import KnowledgeBase
from models.pipeline import BACKENDS, EXTRACTORS, LLM_MODES, STRATEGIES, PipelineConfig
from models.planning import DomainSpec

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_BAD_INPUT = 2
EXIT_PLANNING = 3
EXIT_PREDICTION = 4
EXIT_GATEWAY = 5

COMMANDS = ("validate", "predict", "ground", "plan", "simulate", "pipeline")


def exit_code_for(error: Exception) -> int:
    """Map an exception to the stable exit-code table."""
    if isinstance(error, (GatewayError, ExtractionInvalid)):
        return EXIT_GATEWAY
    if isinstance(error, PredictionError):
        return EXIT_PREDICTION
    if isinstance(error, (TypeMismatch, UnknownAction)):
        return EXIT_BAD_INPUT
    if isinstance(error, PlanningError):
        return EXIT_PLANNING
    return EXIT_BAD_INPUT


def banner(title: str) -> None:
    print("=" * 70)
    print(title)
    print("=" * 70)


def print_summary(summary: dict) -> None:
    table = pd.DataFrame({"value": [str(v) for v in summary.values()]}, index=list(summary.keys()))
    print(table.to_string())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="awareplan",
        description="Human-aware robot task planning over household scene graphs.",
    )
    parser.add_argument("command", choices=COMMANDS, help="Stage to run")
    parser.add_argument("--scene", help="Scene graph snapshot sequence (JSON)")
    parser.add_argument("--knowledge", help="Knowledge base (JSON)")
    parser.add_argument("--task", help="Robot task with goal literals (JSON)")
    parser.add_argument("--agenda", action="append", default=[], help="Human agenda (JSON); repeatable")
    parser.add_argument("--domain", help="Domain PDDL file for plan/simulate")
    parser.add_argument("--problem", help="Problem PDDL file for plan")
    parser.add_argument("--plan", dest="plan_file", help="plan.json for simulate")
    parser.add_argument("--backend", default="heuristic", choices=BACKENDS, help="Goal predictor backend")
    parser.add_argument("--extractor", default="passthrough", choices=EXTRACTORS,
                        help="Domain element extractor")
    parser.add_argument("--strategy", default="ucs", choices=STRATEGIES, help="Search strategy")
    parser.add_argument("--llm-mode", choices=LLM_MODES, help=f"LLM mode (default {Config.LLM_MODE})")
    parser.add_argument("--fixtures", help="Directory of recorded LLM replies")
    parser.add_argument("--out", default="out", help="Output directory")
    parser.add_argument("--gamma", type=float, default=Config.PREDICTOR_GAMMA, help="Recency discount in (0, 1]")
    parser.add_argument("--max-candidates", type=int, default=Config.PREDICTOR_MAX_CANDIDATES,
                        help="Goal candidates kept per human")
    parser.add_argument("--seed", type=int, default=0, help="Seed for search tie-breaking")
    parser.add_argument("--ignore-occupancy", action="store_true",
                        help="Strip human-active-in preconditions from the domain")
    parser.add_argument("--record-timing", action="store_true", help="Write search runtime into plan.json")
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    return PipelineConfig(
        scene=args.scene,
        knowledge=args.knowledge,
        task=args.task,
        agendas=tuple(args.agenda),
        domain=args.domain,
        problem=args.problem,
        plan=args.plan_file,
        backend=args.backend,
        extractor=args.extractor,
        strategy=args.strategy,
        llm_mode=args.llm_mode,
        fixtures_path=args.fixtures,
        out=args.out,
        gamma=args.gamma,
        max_candidates=args.max_candidates,
        seed=args.seed,
        ignore_occupancy=args.ignore_occupancy,
        record_timing=args.record_timing,
    )


def _domain_of(kb: Optional[KnowledgeBase]) -> DomainSpec:
    if kb is None:
        return DomainSpec(name="household")
    return DomainSpec.from_elements(kb.domain_name, kb.structured)


def cmd_validate(config: PipelineConfig) -> int:
    """Validate scene, knowledge and agendas; list every violation found."""
    banner("VALIDATION REPORT")
    violations: List[str] = []
    seq = None
    kb = None

    if config.scene:
        found = document_violations(read_text(config.scene))
        violations.extend(found)
        print(f"{'✓' if not found else '✗'} Scene graph: {config.scene}")
        if not found:
            seq = load_snapshot_sequence(read_text(config.scene))

    if config.knowledge:
        try:
            kb = load_knowledge(read_text(config.knowledge))
            print(f"✓ Knowledge base: {config.knowledge}")
            violations.extend(check_agent_actions(kb))
        except KnowledgeError as e:
            violations.append(f"knowledge: {e.message}")
            print(f"✗ Knowledge base: {config.knowledge}")

    if seq is not None and kb is not None:
        for label in check_affordances(seq.latest.items, kb.structured):
            violations.append(label)

    agendas = []
    for path in config.agendas:
        try:
            agendas.append(load_agenda(read_text(path)))
            print(f"✓ Agenda: {path}")
        except ValidationError as e:
            violations.append(f"agenda {path}: {e.errors()[0]['msg']}")
            print(f"✗ Agenda: {path}")
    if seq is not None and agendas:
        try:
            HouseholdSimulator(seq.latest, _domain_of(kb), agendas)
        except SimulationError as e:
            violations.append(f"agenda: {e.message}")

    print("-" * 70)
    if violations:
        for violation in violations:
            print(f"  ✗ {violation}")
        print(f"\n{len(violations)} violation(s)")
        return EXIT_VIOLATIONS
    print("No violations")
    return EXIT_OK


def cmd_predict(engine: PipelineEngine) -> int:
    banner("GOAL PREDICTION")
    report = engine.predict()
    for human_id in sorted(report.distributions):
        selected = report.selections[human_id]
        print(f"✓ {human_id}: {selected.canonical()} (p={selected.probability:.3f})")
        for candidate in report.distributions[human_id].candidates:
            print(f"    {candidate.probability:.3f}  {candidate.canonical()}")
    return EXIT_OK


def cmd_ground(engine: PipelineEngine) -> int:
    banner("GROUNDING")
    domain, problem, _ = engine.ground()
    print_summary({
        "domain": domain.name,
        "actions": len(domain.actions),
        "objects": len(problem.objects),
        "init literals": len(problem.init),
        "goal partitions": len(problem.goals),
    })
    return EXIT_OK


def cmd_plan(engine: PipelineEngine) -> int:
    banner("PLANNING")
    found, verdict = engine.plan()
    for step in found.steps:
        print(f"  {step.index:3d}  [{step.agent}]  {step}")
    print(f"\n✓ {len(found)} steps, verdict {verdict.status.value}")
    return EXIT_OK


def cmd_simulate(engine: PipelineEngine) -> int:
    banner("SIMULATION")
    trace, report = engine.simulate_files()
    print_summary({
        "steps": report.steps,
        "faulted steps": report.faulted_steps,
        "co-occupancy steps": report.co_occupancy_steps,
        "item conflicts": report.item_conflicts,
    })
    return EXIT_OK


def cmd_pipeline(engine: PipelineEngine) -> int:
    banner("PIPELINE")
    result = engine.run()
    print_summary(result.summary)
    print("\nArtifacts:")
    for path in result.artifacts:
        print(f"  - {path}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        if args.command == "validate":
            return cmd_validate(config)
        engine = PipelineEngine(config)
        handlers = {
            "predict": cmd_predict,
            "ground": cmd_ground,
            "plan": cmd_plan,
            "simulate": cmd_simulate,
            "pipeline": cmd_pipeline,
        }
        return handlers[args.command](engine)
    except AwarePlanError as e:
        code = exit_code_for(e)
        stage = f" (stage {e.stage})" if getattr(e, "stage", None) else ""
        print(f"✗ {type(e).__name__}{stage}: {e.message}")
        logger.error(f"{args.command} failed with exit code {code}: {e.message}")
        return code
    except (OSError, ValidationError, ValueError) as e:
        print(f"✗ Unreadable or invalid input: {str(e)}")
        logger.error(f"{args.command} failed with exit code {EXIT_BAD_INPUT}: {str(e)}")
        return EXIT_BAD_INPUT


if __name__ == '__main__':
    sys.exit(main())
