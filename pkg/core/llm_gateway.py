"""
Structured LLM completions with schema validation, repair retries and
record/replay fixtures.

Every exit is either a reply that passed validation or an exception.
"""

from typing import Any, Callable, Dict, Optional
import json
import logging
import re

from jsonschema import Draft7Validator
from pydantic import BaseModel, ConfigDict, Field, field_validator

from config import Config
from connectors.llm.connector import LLMConnector
from core.base_connector import BaseConnector
from core.exceptions import BudgetExceeded, ReplayMiss, SchemaViolation, TransportError
from models.replay_store import ReplayMode, ReplayStore

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

_FENCE_RE = re.compile(r"^```(?:json)?\s*(.*?)\s*```$", re.DOTALL)

ReplyValidator = Callable[[Dict[str, Any]], None]


class CompletionRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    prompt: str
    response_schema: Dict[str, Any]
    temperature: float = Field(default=0.0, ge=0.0, le=1.0)
    max_retries: int = Field(default=2, ge=0)
    budget_tokens: int = Field(default=16000, gt=0)

    @field_validator("prompt")
    @classmethod
    def _non_empty(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("prompt must not be empty")
        return value

    def __hash__(self) -> int:
        return hash(self.prompt)


def parse_reply(content: str) -> Dict[str, Any]:
    """Decode a reply body, tolerating a surrounding markdown code fence."""
    text = content.strip()
    fenced = _FENCE_RE.match(text)
    if fenced:
        text = fenced.group(1)
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("reply must be a JSON object")
    return data


def check_reply(reply: Dict[str, Any], schema: Dict[str, Any],
                validator: Optional[ReplyValidator] = None) -> Optional[str]:
    """
    Returns:
        None if the reply is acceptable, otherwise a description of the first problem
    """
    errors = sorted(Draft7Validator(schema).iter_errors(reply), key=lambda e: list(e.absolute_path))
    if errors:
        location = "/".join(str(part) for part in errors[0].absolute_path) or "<root>"
        return f"{location}: {errors[0].message}"
    if validator is not None:
        try:
            validator(reply)
        except ValueError as e:
            return str(e)
    return None


class LLMGateway:
    """
    Runs completion requests through a connector according to the store's
    mode: replay reads fixtures only, record fills missing fixtures from the
    live service, live never touches fixtures.
    """

    def __init__(self, connector: BaseConnector = None, store: ReplayStore = None):
        self.connector = connector
        self.default_store = store or ReplayStore()

    @classmethod
    def from_config(cls, mode: str = None, fixtures_path: str = None) -> "LLMGateway":
        connector = LLMConnector({
            "service_id": "llm",
            "url": Config.LLM_BASE_URL,
            "api_key": Config.LLM_API_KEY,
            "model": Config.LLM_MODEL,
            "timeout": Config.LLM_TIMEOUT,
            "max_retries": Config.MAX_RETRIES,
            "retry_delay": Config.RETRY_BACKOFF_FACTOR,
        })
        return cls(connector, ReplayStore(mode=mode, fixtures_path=fixtures_path))

    def request(self, prompt: str, response_schema: Dict[str, Any], temperature: float = 0.0,
                max_retries: int = None, budget_tokens: int = None) -> CompletionRequest:
        return CompletionRequest(
            prompt=prompt,
            response_schema=response_schema,
            temperature=temperature,
            max_retries=Config.LLM_MAX_RETRIES if max_retries is None else max_retries,
            budget_tokens=budget_tokens or Config.LLM_BUDGET_TOKENS,
        )

    def complete_structured(self, req: CompletionRequest, store: ReplayStore = None,
                            validator: Optional[ReplyValidator] = None) -> Dict[str, Any]:
        """
        Obtain a reply that validates against req.response_schema.

        Args:
            req: Completion request
            store: Replay store; defaults to the gateway's own
            validator: Optional semantic check raising ValueError, applied after
                the schema check and sharing its retry budget

        Returns:
            The validated reply object

        Raises:
            TransportError, SchemaViolation, ReplayMiss, BudgetExceeded
        """
        store = store or self.default_store
        fingerprint = store.generate_fingerprint(req.prompt, req.response_schema)

        if store.mode in (ReplayMode.REPLAY, ReplayMode.RECORD):
            stored = store.get(fingerprint)
            if stored is not None:
                problem = check_reply(stored, req.response_schema, validator)
                if problem:
                    raise SchemaViolation(
                        f"Recorded reply {fingerprint[:12]} fails validation", attempts=0, last_error=problem
                    )
                return stored
            if store.mode == ReplayMode.REPLAY:
                raise ReplayMiss(f"No recorded reply for request {fingerprint}", fingerprint=fingerprint)

        reply = self._complete_live(req, validator)
        if store.mode == ReplayMode.RECORD:
            store.save(fingerprint, req.prompt, req.response_schema, reply)
        return reply

    def _complete_live(self, req: CompletionRequest, validator: Optional[ReplyValidator]) -> Dict[str, Any]:
        if self.connector is None:
            raise TransportError("No LLM connector configured for live completion")

        schema_text = json.dumps(req.response_schema, indent=2, sort_keys=True)
        base_prompt = f"{req.prompt}\n\nReply with JSON matching this schema:\n{schema_text}"
        prompt = base_prompt
        tokens_used = 0
        last_error = None

        for attempt in range(req.max_retries + 1):
            result = self.connector.query({
                "prompt": prompt,
                "temperature": req.temperature,
                "max_tokens": req.budget_tokens,
            })
            tokens_used += int(result.get("usage", {}).get("total_tokens", 0) or 0)
            if tokens_used > req.budget_tokens:
                raise BudgetExceeded(
                    f"LLM request used {tokens_used} tokens, budget is {req.budget_tokens}"
                )

            try:
                reply = parse_reply(result["content"])
                last_error = check_reply(reply, req.response_schema, validator)
            except ValueError as e:
                last_error = f"reply is not a JSON object: {str(e)}"

            if last_error is None:
                return reply

            logger.warning(f"LLM reply rejected (attempt {attempt + 1}/{req.max_retries + 1}): {last_error}")
            prompt = (
                f"{base_prompt}\n\nYour previous reply was rejected: {last_error}\n"
                "Reply again with only a corrected JSON object."
            )

        raise SchemaViolation(
            f"LLM reply failed validation after {req.max_retries + 1} attempts",
            attempts=req.max_retries + 1,
            last_error=last_error,
        )
