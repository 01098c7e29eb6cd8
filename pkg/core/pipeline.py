"""
Pipeline Engine

Runs the toolkit's stages over files on disk and writes their artifacts:
transform (knowledge, prediction, grounding), search, validation and the
optional simulation against human agendas.
"""

from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Optional, Tuple
import logging
import time

from config import Config
from core.documents import read_text, write_json
from core.exceptions import PlanningError
from core.grounding import load_task, strip_occupancy_preconditions, transform
from core.knowledge_base import load_knowledge
from core.llm_gateway import LLMGateway
from core.pddl import emit_domain, emit_problem, parse_domain, parse_problem
from core.planner import ground_task, load_plan, plan as search, resolve_strategy, validate_plan, write_plan
from core.predictor import resolve_backend
from core.scene_graph import load_snapshot_sequence
from core.simulator import HouseholdSimulator, disturbance_metrics, load_agenda, report_to_dict, write_trace
from models.knowledge import KnowledgeBase
from models.literal import Literal
from models.pipeline import PipelineConfig, PipelineResult
from models.planning import DomainSpec, Plan, ProblemSpec, SearchConfig, Verdict
from models.prediction import PredictionReport
from models.replay_store import ReplayStore
from models.scene_graph import SnapshotSequence
from models.simulation import Agenda, DisturbanceReport, Trace

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

PREDICTION_REPORT = "prediction_report.json"
TRACE_FILE = "trace.jsonl"
DISTURBANCE_FILE = "disturbance.json"


class PipelineEngine:
    """
    Orchestrates one invocation: loads the configured inputs, runs the
    requested stages and writes every artifact to the output directory.
    """

    def __init__(self, config: PipelineConfig, gateway: LLMGateway = None, store: ReplayStore = None):
        """
        Initialize pipeline engine.

        Args:
            config: Paths and options of this invocation
            gateway: LLM gateway; built from Config when an llm stage is selected
            store: Replay store; defaults to the gateway's own
        """
        self.config = config
        if gateway is None and config.uses_llm:
            gateway = LLMGateway.from_config(mode=config.llm_mode, fixtures_path=config.fixtures_path)
        self.gateway = gateway
        self.store = store or (gateway.default_store if gateway is not None else None)
        self.out = Path(config.out)
        self.artifacts: List[Path] = []

    # Inputs

    def _require(self, value: Optional[str], flag: str) -> str:
        if not value:
            raise FileNotFoundError(f"{flag} is required for this command")
        return value

    def load_knowledge(self) -> KnowledgeBase:
        return load_knowledge(read_text(self._require(self.config.knowledge, "--knowledge")))

    def load_scene(self) -> SnapshotSequence:
        return load_snapshot_sequence(read_text(self._require(self.config.scene, "--scene")))

    def load_task(self) -> Tuple[Optional[str], FrozenSet[Literal]]:
        if not self.config.task:
            return None, frozenset()
        return load_task(read_text(self.config.task))

    def load_agendas(self) -> List[Agenda]:
        return [load_agenda(read_text(path)) for path in self.config.agendas]

    def _write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(text, encoding="utf-8")
        self.artifacts.append(path)
        return path

    def _write_json(self, name: str, data: Any) -> Path:
        path = write_json(self.out / name, data)
        self.artifacts.append(path)
        return path

    # Stages

    def transform(self) -> Tuple[DomainSpec, ProblemSpec, PredictionReport]:
        """
        Knowledge extraction, goal prediction and grounding over the configured inputs.

        The occupancy preconditions are stripped from the returned domain when
        config.ignore_occupancy is set.
        """
        kb = self.load_knowledge()
        seq = self.load_scene()
        task_name, robot_goal = self.load_task()
        backend = resolve_backend(
            self.config.backend, kb, self.gateway, self.store,
            gamma=self.config.gamma, max_candidates=self.config.max_candidates,
        )
        domain, problem, report = transform(
            kb, seq, self.config.extractor, backend,
            robot_goal=robot_goal, problem_name=task_name, gateway=self.gateway, store=self.store,
        )
        if self.config.ignore_occupancy:
            domain = strip_occupancy_preconditions(domain)
        return domain, problem, report

    def predict(self) -> PredictionReport:
        _, _, report = self.transform()
        self._write_json(PREDICTION_REPORT, report.to_dict())
        return report

    def ground(self) -> Tuple[DomainSpec, ProblemSpec, PredictionReport]:
        """Transform and write the domain, problem and prediction report."""
        domain, problem, report = self.transform()
        self.write_specs(domain, problem)
        self._write_json(PREDICTION_REPORT, report.to_dict())
        return domain, problem, report

    def write_specs(self, domain: DomainSpec, problem: ProblemSpec) -> None:
        self._write(f"{problem.name}.domain.pddl", emit_domain(domain))
        self._write(f"{problem.name}.problem.pddl", emit_problem(problem))

    def load_specs(self) -> Tuple[DomainSpec, ProblemSpec]:
        domain = parse_domain(read_text(self._require(self.config.domain, "--domain")))
        problem = parse_problem(read_text(self._require(self.config.problem, "--problem")), domain)
        if self.config.ignore_occupancy:
            domain = strip_occupancy_preconditions(domain)
        return domain, problem

    def solve(self, domain: DomainSpec, problem: ProblemSpec) -> Tuple[Plan, Verdict]:
        """
        Ground, search and validate.

        Raises:
            ExplosionGuard, Unsolvable, ResourceLimit, PlanningError (plan fails validation)
        """
        task = ground_task(domain, problem, action_cap=Config.GROUNDING_ACTION_CAP)
        cfg = SearchConfig(
            strategy=resolve_strategy(self.config.strategy),
            seed=self.config.seed,
            max_expansions=Config.PLANNER_MAX_EXPANSIONS,
        )
        found = search(task, cfg)
        verdict = validate_plan(task, found)
        if not verdict.is_valid:
            raise PlanningError(f"Search returned a plan that fails validation: {verdict.status.value}")
        for path in write_plan(self.out, problem.name, found, self.config.record_timing):
            self.artifacts.append(path)
        return found, verdict

    def plan(self) -> Tuple[Plan, Verdict]:
        """Plan from --domain/--problem PDDL files when given, otherwise from a fresh transform."""
        if self.config.domain and self.config.problem:
            domain, problem = self.load_specs()
        else:
            domain, problem, _ = self.ground()
        return self.solve(domain, problem)

    def simulate(self, domain: DomainSpec, plan_: Plan,
                 seq: SnapshotSequence = None) -> Tuple[Trace, DisturbanceReport]:
        """
        Run the robot's steps of a plan from the latest snapshot against the agendas.
        """
        seq = seq or self.load_scene()
        simulator = HouseholdSimulator(seq.latest, domain, self.load_agendas())
        trace = simulator.run(plan_)
        report = disturbance_metrics(trace)
        self.artifacts.append(write_trace(self.out / TRACE_FILE, trace))
        self._write_json(DISTURBANCE_FILE, report_to_dict(report))
        return trace, report

    def simulate_files(self) -> Tuple[Trace, DisturbanceReport]:
        """Simulation with the domain from --domain (or the knowledge base) and the plan from --plan."""
        plan_ = load_plan(read_text(self._require(self.config.plan, "--plan")))
        if self.config.domain:
            domain = parse_domain(read_text(self.config.domain))
        else:
            kb = self.load_knowledge()
            domain = DomainSpec.from_elements(kb.domain_name, kb.structured)
        if self.config.ignore_occupancy:
            domain = strip_occupancy_preconditions(domain)
        return self.simulate(domain, plan_)

    def run(self) -> PipelineResult:
        """
        The whole pipeline: transform, write specs, plan, validate and, with
        agendas, simulate.

        Returns:
            PipelineResult with artifacts and summary
        """
        start = time.perf_counter()
        domain, problem, report = self.ground()
        found, verdict = self.solve(domain, problem)

        trace = disturbance = None
        if self.config.agendas:
            trace, disturbance = self.simulate(domain, found)

        summary: Dict[str, Any] = {
            "problem": problem.name,
            "humans": len(problem.human_ids),
            "goal literals": len(problem.goal_literals()),
            "plan steps": len(found),
            "robot steps": len(found.steps_for(problem.robot_id)) if problem.robot_id else 0,
            "verdict": verdict.status.value,
            "expansions": found.metadata.get("expansions"),
        }
        if disturbance is not None:
            summary["co-occupancy steps"] = disturbance.co_occupancy_steps
            summary["item conflicts"] = disturbance.item_conflicts
        summary["runtime (s)"] = round(time.perf_counter() - start, 3)
        logger.info(f"Pipeline finished for {problem.name}: {len(found)} steps, {len(self.artifacts)} artifacts")

        return PipelineResult(
            name=problem.name,
            artifacts=tuple(str(path) for path in self.artifacts),
            summary=summary,
            report=report,
            plan=found,
            verdict=verdict,
            trace=trace,
            disturbance=disturbance,
        )
