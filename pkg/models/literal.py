"""
Literal Model

Typed literals shared by knowledge, grounding, prediction and planning.
A literal is a predicate applied to arguments, optionally negated. Arguments
starting with "?" are schema variables, everything else is an object id.
"""

import re
from typing import Dict, Tuple

from pydantic import BaseModel, ConfigDict, field_validator

_LITERAL_RE = re.compile(r"^\(\s*([^\s()]+)((?:\s+[^\s()]+)*)\s*\)$")
_NEGATED_RE = re.compile(r"^\(\s*not\s+(\(.*\))\s*\)$", re.DOTALL)

GroundAtom = Tuple[str, ...]


class Literal(BaseModel):
    model_config = ConfigDict(frozen=True)

    predicate: str
    args: Tuple[str, ...] = ()
    negated: bool = False

    @field_validator("predicate")
    @classmethod
    def _predicate_name(cls, value: str) -> str:
        value = value.strip().lower()
        if not value or value == "not":
            raise ValueError("literal predicate must be a non-empty name")
        return value

    @field_validator("args")
    @classmethod
    def _lower_args(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        return tuple(arg.lower() for arg in value)

    @classmethod
    def parse(cls, text: str) -> "Literal":
        """
        Parse a literal from its parenthesised form.

        Args:
            text: e.g. "(at-agent ?a ?r)" or "(not (human-active-in kitchen))"

        Returns:
            Literal
        """
        stripped = text.strip()
        negated = _NEGATED_RE.match(stripped)
        if negated:
            inner = cls.parse(negated.group(1))
            if inner.negated:
                raise ValueError(f"Nested negation is not supported: {text}")
            return inner.model_copy(update={"negated": True})

        match = _LITERAL_RE.match(stripped)
        if not match:
            raise ValueError(f"Malformed literal: {text!r}")
        args = tuple(match.group(2).split())
        return cls(predicate=match.group(1), args=args)

    @property
    def atom(self) -> GroundAtom:
        """Positive tuple form used by the grounded search."""
        return (self.predicate,) + self.args

    @property
    def variables(self) -> Tuple[str, ...]:
        return tuple(arg for arg in self.args if arg.startswith("?"))

    @property
    def is_ground(self) -> bool:
        return not self.variables

    def positive(self) -> "Literal":
        return self.model_copy(update={"negated": False}) if self.negated else self

    def substitute(self, binding: Dict[str, str]) -> "Literal":
        """Replace variables with the bound object ids."""
        return self.model_copy(update={"args": tuple(binding.get(arg, arg) for arg in self.args)})

    def __str__(self) -> str:
        body = " ".join((self.predicate,) + self.args)
        return f"(not ({body}))" if self.negated else f"({body})"

    def sort_key(self) -> str:
        return str(self)


def atom_to_text(atom: GroundAtom) -> str:
    return "(" + " ".join(atom) + ")"


