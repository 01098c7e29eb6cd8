from typing import Any, Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from config import Config
from models.planning import Plan, Verdict
from models.prediction import PredictionReport
from models.simulation import DisturbanceReport, Trace

BACKENDS = ("heuristic", "llm")
EXTRACTORS = ("passthrough", "llm")
STRATEGIES = ("ucs", "astar", "gbfs")
LLM_MODES = ("live", "record", "replay")


class PipelineConfig(BaseModel):
    """
    One invocation of the toolkit. Paths are checked for existence by the
    command that needs them, not here.
    """

    model_config = ConfigDict(frozen=True)

    scene: Optional[str] = None
    knowledge: Optional[str] = None
    task: Optional[str] = None
    agendas: Tuple[str, ...] = ()
    domain: Optional[str] = None
    problem: Optional[str] = None
    plan: Optional[str] = None
    backend: str = "heuristic"
    extractor: str = "passthrough"
    strategy: str = "ucs"
    llm_mode: Optional[str] = None
    fixtures_path: Optional[str] = None
    out: str = "out"
    gamma: float = Field(default_factory=lambda: Config.PREDICTOR_GAMMA, gt=0, le=1)
    max_candidates: int = Field(default_factory=lambda: Config.PREDICTOR_MAX_CANDIDATES, gt=0)
    seed: int = 0
    ignore_occupancy: bool = False
    record_timing: bool = False

    @field_validator("backend")
    @classmethod
    def _known_backend(cls, value: str) -> str:
        if value not in BACKENDS:
            raise ValueError(f"backend must be one of {', '.join(BACKENDS)}")
        return value

    @field_validator("extractor")
    @classmethod
    def _known_extractor(cls, value: str) -> str:
        if value not in EXTRACTORS:
            raise ValueError(f"extractor must be one of {', '.join(EXTRACTORS)}")
        return value

    @field_validator("strategy")
    @classmethod
    def _known_strategy(cls, value: str) -> str:
        if value not in STRATEGIES:
            raise ValueError(f"strategy must be one of {', '.join(STRATEGIES)}")
        return value

    @field_validator("llm_mode")
    @classmethod
    def _known_mode(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and value not in LLM_MODES:
            raise ValueError(f"llm mode must be one of {', '.join(LLM_MODES)}")
        return value

    @property
    def uses_llm(self) -> bool:
        return self.backend == "llm" or self.extractor == "llm"


class PipelineResult(BaseModel):
    """What a run produced; stages that did not run stay None."""

    model_config = ConfigDict(frozen=True)

    name: str
    artifacts: Tuple[str, ...] = ()
    summary: Dict[str, Any] = Field(default_factory=dict)
    report: Optional[PredictionReport] = None
    plan: Optional[Plan] = None
    verdict: Optional[Verdict] = None
    trace: Optional[Trace] = None
    disturbance: Optional[DisturbanceReport] = None
