"""
Exception hierarchy for the planning toolkit.

Every module raises subclasses of its own family base so callers (the CLI in
particular) can map whole families onto exit codes.
"""

from typing import Any, List, Optional


class AwarePlanError(Exception):
    """Base class for all toolkit errors."""

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context
        # Set by the transform orchestration when an error crosses a stage boundary
        self.stage: Optional[str] = None

    def __str__(self) -> str:
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


class SchemaError(AwarePlanError):
    """A JSON document does not conform to its published schema."""

    def __init__(self, message: str, path: Optional[str] = None, violations: List[str] = None):
        super().__init__(message, path=path)
        self.path = path
        self.violations = violations or []


# Scene graph

class SceneGraphError(AwarePlanError):
    pass


class HierarchyError(SceneGraphError):
    def __init__(self, message: str, offending_ids: List[str] = None):
        super().__init__(message)
        self.offending_ids = offending_ids or []


class MissingRobot(SceneGraphError):
    pass


class UnknownAgent(SceneGraphError):
    pass


class EmptySequence(SceneGraphError):
    pass


# Knowledge base

class KnowledgeError(AwarePlanError):
    pass


class UndeclaredPredicate(KnowledgeError):
    pass


class TypeCycle(KnowledgeError):
    pass


class UnknownDomain(KnowledgeError):
    pass


class EmptySource(KnowledgeError):
    pass


class ExtractionInvalid(KnowledgeError):
    pass


class InvalidDomain(KnowledgeError):
    """Structured domain elements violate a schema or predicate invariant."""


# LLM gateway

class GatewayError(AwarePlanError):
    pass


class TransportError(GatewayError):
    pass


class SchemaViolation(GatewayError):
    def __init__(self, message: str, attempts: int = 0, last_error: str = None):
        super().__init__(message, attempts=attempts)
        self.attempts = attempts
        self.last_error = last_error


class ReplayMiss(GatewayError):
    def __init__(self, message: str, fingerprint: str = None):
        super().__init__(message, fingerprint=fingerprint)
        self.fingerprint = fingerprint


class BudgetExceeded(GatewayError):
    pass


# Prediction

class PredictionError(AwarePlanError):
    pass


class UncoveredGoalWithoutSynthesis(PredictionError):
    pass


class DegenerateWeights(PredictionError):
    pass


class SynthesisInvalid(PredictionError):
    pass


class NoGoalCandidates(PredictionError):
    pass


# Grounding

class GroundingError(AwarePlanError):
    pass


class DuplicateObject(GroundingError):
    pass


class UnknownRoom(GroundingError):
    pass


class UndeclaredStatePredicate(GroundingError):
    pass


class IllTypedGoal(GroundingError):
    pass


# PDDL text

class PddlError(AwarePlanError):
    pass


class LexError(PddlError):
    def __init__(self, message: str, line: int = None, column: int = None):
        super().__init__(f"{message} (line {line}, column {column})", line=line, column=column)
        self.line = line
        self.column = column


class ParseError(PddlError):
    def __init__(self, message: str, line: int = None, column: int = None):
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{location}", line=line, column=column)
        self.line = line
        self.column = column


class UnsupportedFeature(PddlError):
    def __init__(self, feature: str):
        super().__init__(f"Unsupported PDDL feature: {feature}", feature=feature)
        self.feature = feature


# Planning

class PlanningError(AwarePlanError):
    pass


class TypeMismatch(PlanningError):
    pass


class ExplosionGuard(PlanningError):
    pass


class Unsolvable(PlanningError):
    pass


class ResourceLimit(PlanningError):
    pass


class UnknownAction(PlanningError):
    pass


class OracleCapExceeded(PlanningError):
    pass


# Simulation

class SimulationError(AwarePlanError):
    pass


class FaultedStep(SimulationError):
    def __init__(self, message: str, timestep: int = None, state: Any = None):
        super().__init__(message, timestep=timestep)
        self.timestep = timestep
        # Successor world with the robot action replaced by a no-op
        self.state = state


class EmptyTrace(SimulationError):
    pass
