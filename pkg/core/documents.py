"""
JSON document helpers shared by every loader: decoding, schema validation
against the schemas shipped under schemas/, and canonical writing.
"""

import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Union

from jsonschema import Draft7Validator

from core.exceptions import SchemaError

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schemas"

Document = Union[str, bytes, Dict[str, Any], list]


@lru_cache(maxsize=None)
def load_schema(schema_name: str) -> Dict[str, Any]:
    """
    Load a shipped JSON Schema.

    Args:
        schema_name: File stem under schemas/, e.g. "scene_graph"

    Returns:
        Parsed schema dictionary
    """
    with open(SCHEMA_DIR / f"{schema_name}.schema.json", "r", encoding="utf-8") as f:
        return json.load(f)


def decode(document: Document, label: str) -> Any:
    """Decode JSON text; already-decoded documents pass through."""
    if isinstance(document, (dict, list)):
        return document
    try:
        if isinstance(document, bytes):
            document = document.decode("utf-8")
        return json.loads(document)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SchemaError(f"{label} is not valid UTF-8 JSON: {str(e)}")


def validate_against(data: Any, schema: Dict[str, Any], label: str) -> None:
    """
    Validate decoded data against a JSON Schema.

    Raises:
        SchemaError: listing every violation found
    """
    validator = Draft7Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        violations = []
        for error in errors:
            location = "/".join(str(part) for part in error.absolute_path) or "<root>"
            violations.append(f"{location}: {error.message}")
        logger.error(f"{label} failed schema validation with {len(violations)} violation(s)")
        raise SchemaError(f"{label} does not match schema: {violations[0]}", violations=violations)


def load_document(document: Document, schema_name: str, label: str) -> Any:
    data = decode(document, label)
    validate_against(data, load_schema(schema_name), label)
    return data


def read_text(path: Union[str, Path]) -> str:
    """Read a UTF-8 file. OSError propagates so callers can treat it as unreadable input."""
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def dump_json(data: Any) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path: Union[str, Path], data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(data), encoding="utf-8")
    return path
