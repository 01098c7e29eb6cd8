"""
Chat Completion Connector

Messages-style chat completion client for any OpenAI-compatible endpoint.
Endpoint, model and key come from configuration, never from code.
"""

import requests
import time
from typing import Dict, List, Any
from core.base_connector import BaseConnector
from core.exceptions import TransportError
import logging

logger = logging.getLogger(__name__)

SYSTEM_PROMPT = (
    "You are a planning assistant for a household robot. "
    "Answer with a single JSON object and nothing else."
)


class LLMConnector(BaseConnector):
    """
    Connector for OpenAI-compatible /chat/completions endpoints.
    """

    def __init__(self, config: Dict[str, Any]):
        """
        Initialize the chat completion connector.

        Args:
            config: Configuration dictionary containing:
                - url: Base API URL (e.g. https://api.openai.com/v1)
                - api_key: Bearer token
                - model: Model name
                - timeout: Request timeout in seconds
                - max_retries: Transport retries
                - retry_delay: Base delay for exponential backoff
        """
        super().__init__(config)
        self.base_url = (config.get("url") or "").rstrip("/")
        self.api_key = config.get("api_key")
        self.timeout = config.get("timeout", 60)
        self.session = None
        self.max_retries = config.get("max_retries", 3)
        self.retry_delay = config.get("retry_delay", 1)

    def connect(self) -> bool:
        """Open an HTTP session with auth headers; no request is sent."""
        if not self.validate():
            self.connected = False
            return False
        self.session = requests.Session()
        self.session.headers.update({
            "Accept": "application/json",
            "Content-Type": "application/json",
            "Authorization": f"Bearer {self.api_key}",
        })
        self.connected = True
        logger.info(f"Prepared chat completion session for {self.base_url} ({self.model})")
        return True

    def disconnect(self) -> bool:
        try:
            if self.session:
                self.session.close()
                self.session = None
            self.connected = False
            return True
        except Exception as e:
            logger.error(f"Error closing chat completion session: {str(e)}")
            return False

    def validate(self) -> bool:
        if not self.base_url:
            logger.error("LLM base URL is not configured")
            return False
        if not self.api_key:
            logger.error("LLM API key is not configured")
            return False
        if not self.model:
            logger.error("LLM model is not configured")
            return False
        return True

    def query(self, parameters: Dict[str, Any]) -> Dict[str, Any]:
        """
        Send one chat completion.

        Args:
            parameters: Query parameters including:
                - prompt: User message text
                - temperature: Sampling temperature
                - max_tokens: Completion token limit (optional)

        Returns:
            dict: {"content": reply text, "usage": {...}, "metadata": {...}}
        """
        if not self.connected:
            if not self.connect():
                raise TransportError("LLM endpoint, model or API key is not configured")

        messages: List[Dict[str, str]] = [{"role": "system", "content": SYSTEM_PROMPT}]
        messages.append({"role": "user", "content": parameters["prompt"]})

        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": parameters.get("temperature", 0.0),
        }
        if parameters.get("max_tokens"):
            payload["max_tokens"] = parameters["max_tokens"]

        response, attempt = self._execute_with_retry(f"{self.base_url}/chat/completions", payload)
        try:
            data = response.json()
        except ValueError as e:
            raise TransportError(f"LLM endpoint returned a non-JSON body: {str(e)}")

        transformed = self.transform(data)
        transformed["metadata"] = self._create_metadata(transformed["usage"], attempt)
        return transformed

    def _execute_with_retry(self, url: str, payload: Dict[str, Any]):
        """
        POST with exponential backoff retry logic.

        Returns:
            (requests.Response, attempt number)
        """
        last_exception = None

        for attempt in range(self.max_retries):
            try:
                response = self.session.post(url, json=payload, timeout=self.timeout)

                if response.status_code == 429:
                    retry_after = float(response.headers.get("Retry-After", self.retry_delay * (2 ** attempt)))
                    logger.warning(f"Rate limited. Retrying after {retry_after} seconds...")
                    last_exception = requests.exceptions.HTTPError("429 Too Many Requests")
                    time.sleep(retry_after)
                    continue

                response.raise_for_status()
                return response, attempt + 1

            except requests.exceptions.RequestException as e:
                last_exception = e
                if attempt < self.max_retries - 1:
                    wait_time = self.retry_delay * (2 ** attempt)
                    logger.warning(f"Request failed (attempt {attempt + 1}/{self.max_retries}). "
                                   f"Retrying in {wait_time} seconds...")
                    time.sleep(wait_time)
                else:
                    logger.error(f"Request failed after {self.max_retries} attempts")

        raise TransportError(f"LLM request failed after {self.max_retries} attempts: {last_exception}")

    def transform(self, data: Any) -> Dict[str, Any]:
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise TransportError("LLM response has no choices[0].message.content")
        return {"content": content or "", "usage": data.get("usage") or {}}
