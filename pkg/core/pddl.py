"""
PDDL text for the supported subset (STRIPS, typing, negative preconditions).

emit_* produce canonical text: sorted predicates, actions, objects and
literals, lowercase identifiers and two-space indentation. Goal partitions are
written as one (and ...) per agent, each preceded by a marker comment
"; partition robot <id>" or "; partition human <id>" so that parse_problem
can restore them.
"""

from typing import Any, Dict, List, Optional, Tuple
import logging
import re

import pyparsing as pp

from core.exceptions import LexError, ParseError, UnsupportedFeature
from core.grounding import require_type_correct
from core.knowledge_base import validate_domain_elements
from models.knowledge import ROOT_TYPE, ActionSchema, ObjectTypeHierarchy, PredicateSignature, TypedParam
from models.literal import Literal
from models.planning import SUPPORTED_REQUIREMENTS, DomainSpec, ProblemSpec

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

INDENT = "  "
_LEGAL_RE = re.compile(r"[A-Za-z0-9_\-?:()\s]")


class PartitionMarker:
    """Parsed "; partition <kind> <agent>" comment."""

    def __init__(self, kind: str, agent_id: str):
        self.kind = kind
        self.agent_id = agent_id

    def __repr__(self) -> str:
        return f"PartitionMarker({self.kind}, {self.agent_id})"


def _build_grammar() -> pp.ParserElement:
    lpar, rpar = pp.Suppress("("), pp.Suppress(")")
    marker = pp.Regex(r";[ \t]*partition[ \t]+(?P<kind>robot|human)[ \t]+(?P<agent>[^\s();]+)[^\n]*")
    marker.set_parse_action(lambda tokens: PartitionMarker(tokens["kind"], tokens["agent"]))
    comment = pp.Suppress(pp.Regex(r";[^\n]*"))
    token = pp.Word(pp.printables, exclude_chars="();")

    sexpr = pp.Forward()
    sexpr <<= pp.Group(lpar + pp.ZeroOrMore(marker | comment | sexpr | token) + rpar)
    return pp.ZeroOrMore(comment) + sexpr + pp.ZeroOrMore(comment) + pp.StringEnd()


_GRAMMAR = _build_grammar()


def _lex(text: str) -> None:
    for line_number, line in enumerate(text.splitlines(), start=1):
        code = line.split(";", 1)[0]
        for column, char in enumerate(code, start=1):
            if not _LEGAL_RE.match(char):
                raise LexError(f"Illegal character {char!r}", line=line_number, column=column)


def read_sexpr(text: str) -> List[Any]:
    """
    Parse PDDL text into nested lists of lowercase tokens.

    Raises:
        LexError, ParseError
    """
    _lex(text)
    try:
        result = _GRAMMAR.parse_string(text.lower(), parse_all=True)
    except pp.ParseException as e:
        raise ParseError(f"Malformed PDDL: {e.msg}", line=e.lineno, column=e.col)
    return result.as_list()[0]


def _without_markers(items: List[Any]) -> List[Any]:
    return [item for item in items if not isinstance(item, PartitionMarker)]


def _expect_header(form: List[Any], keyword: str) -> str:
    form = _without_markers(form)
    if len(form) < 2 or form[0] != "define" or not isinstance(form[1], list) or len(form[1]) != 2 \
            or form[1][0] != keyword or not isinstance(form[1][1], str):
        raise ParseError(f"Expected (define ({keyword} <name>) ...)")
    return form[1][1]


def _typed_list(tokens: List[Any], label: str) -> List[Tuple[str, str]]:
    """Parse "a b - t c - u d" into [(a, t), (b, t), (c, u), (d, object)]."""
    result = []
    pending: List[str] = []
    index = 0
    while index < len(tokens):
        token = tokens[index]
        if isinstance(token, list):
            if token and token[0] == "either":
                raise UnsupportedFeature("either")
            raise ParseError(f"Unexpected list in {label}")
        if token == "-":
            following = tokens[index + 1] if index + 1 < len(tokens) else None
            if isinstance(following, list) and following and following[0] == "either":
                raise UnsupportedFeature("either")
            if not isinstance(following, str):
                raise ParseError(f"Missing type after '-' in {label}")
            if not pending:
                raise ParseError(f"Type without names in {label}")
            result.extend((name, tokens[index + 1]) for name in pending)
            pending = []
            index += 2
            continue
        pending.append(token)
        index += 1
    result.extend((name, ROOT_TYPE) for name in pending)
    return result


def _literal(form: Any, label: str) -> Literal:
    if not isinstance(form, list) or not form:
        raise ParseError(f"Expected a literal in {label}")
    head = form[0]
    if head == "not":
        if len(form) != 2:
            raise ParseError(f"Malformed negation in {label}")
        inner = _literal(form[1], label)
        if inner.negated:
            raise ParseError(f"Nested negation in {label}")
        return inner.model_copy(update={"negated": True})
    if head in ("or", "imply", "exists", "forall", "when", "="):
        raise UnsupportedFeature(head)
    if not isinstance(head, str) or any(not isinstance(arg, str) for arg in form[1:]):
        raise ParseError(f"Malformed literal in {label}")
    return Literal(predicate=head, args=tuple(form[1:]))


def _conjunction(form: Any, label: str) -> List[Literal]:
    form = _without_markers(form) if isinstance(form, list) else form
    if isinstance(form, list) and form and form[0] == "and":
        return [_literal(part, label) for part in form[1:]]
    if form == []:
        return []
    return [_literal(form, label)]


def _parse_action(form: List[Any]) -> ActionSchema:
    if len(form) < 2 or not isinstance(form[1], str):
        raise ParseError("Action without a name")
    name = form[1]
    fields: Dict[str, Any] = {}
    index = 2
    while index < len(form):
        key = form[index]
        if key not in (":parameters", ":precondition", ":effect"):
            raise UnsupportedFeature(str(key))
        if index + 1 >= len(form):
            raise ParseError(f"Action {name}: {key} has no value")
        fields[key] = form[index + 1]
        index += 2

    params = tuple(
        TypedParam(name=param, type=type_name)
        for param, type_name in _typed_list(fields.get(":parameters", []), f"action {name} parameters")
    )
    preconditions = _conjunction(fields.get(":precondition", []), f"action {name} precondition")
    adds, deletes = [], []
    for literal in _conjunction(fields.get(":effect", []), f"action {name} effect"):
        (deletes if literal.negated else adds).append(literal.positive())
    return ActionSchema(
        name=name,
        params=params,
        preconditions=frozenset(preconditions),
        add_effects=frozenset(adds),
        del_effects=frozenset(deletes),
    )


def parse_domain(text: str) -> DomainSpec:
    """
    Parse a domain in the supported subset.

    Raises:
        LexError, ParseError, UnsupportedFeature, plus the domain validator's
        InvalidDomain / UndeclaredPredicate / TypeCycle
    """
    form = read_sexpr(text)
    name = _expect_header(form, "domain")
    requirements: List[str] = []
    types: Dict[str, str] = {}
    predicates: List[PredicateSignature] = []
    actions: List[ActionSchema] = []

    for section in _without_markers(form)[2:]:
        if not isinstance(section, list) or not section:
            raise ParseError(f"Unexpected token in domain {name}")
        keyword = section[0]
        if keyword == ":requirements":
            for requirement in section[1:]:
                if not isinstance(requirement, str):
                    raise ParseError("Malformed requirements list")
                if requirement.lstrip(":") not in SUPPORTED_REQUIREMENTS:
                    raise UnsupportedFeature(requirement)
                requirements.append(requirement)
        elif keyword == ":types":
            types.update(dict(_typed_list(section[1:], "types")))
        elif keyword == ":predicates":
            for signature in section[1:]:
                if not isinstance(signature, list) or not signature:
                    raise ParseError("Malformed predicate declaration")
                params = tuple(TypedParam(name=p, type=t) for p, t in _typed_list(signature[1:], signature[0]))
                predicates.append(PredicateSignature(name=signature[0], params=params))
        elif keyword == ":action":
            actions.append(_parse_action(section))
        else:
            raise UnsupportedFeature(str(keyword))

    domain = DomainSpec(
        name=name,
        requirements=tuple(requirements),
        type_hierarchy=ObjectTypeHierarchy(parent=types),
        predicates=tuple(predicates),
        actions=tuple(actions),
    )
    validate_domain_elements(domain.to_elements())
    return domain


def _parse_goal(form: Any) -> Tuple[Optional[str], Dict[str, frozenset]]:
    if not isinstance(form, list) or not form or form[0] != "and":
        raise ParseError("Goal must be a conjunction of partitions")
    robot_id = None
    goals: Dict[str, frozenset] = {}
    marker: Optional[PartitionMarker] = None
    for part in form[1:]:
        if isinstance(part, PartitionMarker):
            marker = part
            continue
        if marker is None:
            raise ParseError("Goal literal outside a '; partition' block")
        if marker.agent_id in goals:
            raise ParseError(f"Duplicate goal partition for {marker.agent_id}")
        if marker.kind == "robot":
            if robot_id is not None:
                raise ParseError("More than one robot goal partition")
            robot_id = marker.agent_id
        goals[marker.agent_id] = frozenset(_conjunction(part, f"goal of {marker.agent_id}"))
        marker = None
    return robot_id, goals


def parse_problem(text: str, domain: DomainSpec = None) -> ProblemSpec:
    """
    Parse a problem in the supported subset.

    Args:
        text: Problem text
        domain: When given, the problem is type-checked against it

    Raises:
        LexError, ParseError, UnsupportedFeature, TypeMismatch
    """
    form = read_sexpr(text)
    name = _expect_header(form, "problem")
    domain_name = None
    objects: Dict[str, str] = {}
    init: List[Literal] = []
    robot_id, goals = None, {}

    for section in _without_markers(form)[2:]:
        if not isinstance(section, list) or not section:
            raise ParseError(f"Unexpected token in problem {name}")
        keyword = section[0]
        if keyword == ":domain":
            domain_name = section[1] if len(section) == 2 else None
        elif keyword == ":objects":
            for object_id, type_name in _typed_list(section[1:], "objects"):
                if object_id in objects:
                    raise ParseError(f"Object {object_id} declared twice")
                objects[object_id] = type_name
        elif keyword == ":init":
            for fact in _without_markers(section[1:]):
                literal = _literal(fact, "init")
                if literal.negated:
                    raise ParseError(f"Negative literal {literal} in init")
                init.append(literal)
        elif keyword == ":goal":
            if len(section) != 2:
                raise ParseError("Goal section must hold one conjunction")
            robot_id, goals = _parse_goal(section[1])
        else:
            raise UnsupportedFeature(str(keyword))

    if domain_name is None:
        raise ParseError(f"Problem {name} names no domain")
    problem = ProblemSpec(
        name=name,
        domain_name=domain_name,
        objects=objects,
        init=frozenset(init),
        robot_id=robot_id,
        goals=goals,
    )
    if domain is not None:
        require_type_correct(domain, problem)
    return problem


def _params_text(params) -> str:
    return " ".join(f"{param.name} - {param.type}" for param in params)


def _literal_lines(literals, depth: int) -> List[str]:
    return [INDENT * depth + str(literal) for literal in sorted(literals, key=lambda lit: lit.sort_key())]


def emit_domain(d: DomainSpec) -> str:
    lines = [f"(define (domain {d.name})"]
    lines.append(INDENT + "(:requirements " + " ".join(f":{r}" for r in d.requirements) + ")")

    by_parent: Dict[str, List[str]] = {}
    for type_name, parent in d.type_hierarchy.parent.items():
        by_parent.setdefault(parent, []).append(type_name)
    if by_parent:
        lines.append(INDENT + "(:types")
        for parent in sorted(by_parent):
            lines.append(INDENT * 2 + " ".join(sorted(by_parent[parent])) + f" - {parent}")
        lines.append(INDENT + ")")

    lines.append(INDENT + "(:predicates")
    for predicate in d.predicates:
        params = _params_text(predicate.params)
        lines.append(INDENT * 2 + f"({predicate.name}{' ' + params if params else ''})")
    lines.append(INDENT + ")")

    for action in d.actions:
        lines.append(INDENT + f"(:action {action.name}")
        lines.append(INDENT * 2 + f":parameters ({_params_text(action.params)})")
        lines.append(INDENT * 2 + ":precondition (and")
        lines.extend(_literal_lines(action.preconditions, 3))
        lines.append(INDENT * 2 + ")")
        lines.append(INDENT * 2 + ":effect (and")
        lines.extend(_literal_lines(action.add_effects, 3))
        lines.extend(_literal_lines({lit.model_copy(update={"negated": True}) for lit in action.del_effects}, 3))
        lines.append(INDENT * 2 + ")")
        lines.append(INDENT + ")")

    lines.append(")")
    return "\n".join(lines) + "\n"


def emit_problem(p: ProblemSpec) -> str:
    lines = [f"(define (problem {p.name})", INDENT + f"(:domain {p.domain_name})"]

    by_type: Dict[str, List[str]] = {}
    for object_id, type_name in p.objects.items():
        by_type.setdefault(type_name, []).append(object_id)
    lines.append(INDENT + "(:objects")
    for type_name in sorted(by_type):
        lines.append(INDENT * 2 + " ".join(sorted(by_type[type_name])) + f" - {type_name}")
    lines.append(INDENT + ")")

    lines.append(INDENT + "(:init")
    lines.extend(_literal_lines(p.init, 2))
    lines.append(INDENT + ")")

    lines.append(INDENT + "(:goal (and")
    for agent_id in p.partition_order():
        kind = "robot" if agent_id == p.robot_id else "human"
        lines.append(INDENT * 2 + f"; partition {kind} {agent_id}")
        lines.append(INDENT * 2 + "(and")
        lines.extend(_literal_lines(p.goals[agent_id], 3))
        lines.append(INDENT * 2 + ")")
    lines.append(INDENT + "))")

    lines.append(")")
    return "\n".join(lines) + "\n"
