from abc import ABC, abstractmethod
from typing import Dict, Any


class BaseConnector(ABC):
    """
    Abstract base class for external completion services.
    Each connector must implement the standard interface methods.
    """

    def __init__(self, config: Dict[str, Any]):
        """
        Initialize the connector with configuration.

        Args:
            config: Dictionary containing endpoint, model and credential settings
        """
        self.config = config
        self.service_id = config.get("service_id", "llm")
        self.model = config.get("model")
        self.connected = False

    @abstractmethod
    def connect(self) -> bool:
        """
        Prepare a session against the service.

        Returns:
            bool: True if the connector is ready to send requests
        """
        pass

    @abstractmethod
    def disconnect(self) -> bool:
        """
        Close the session and release resources.

        Returns:
            bool: True if disconnection successful
        """
        pass

    @abstractmethod
    def query(self, parameters: Dict[str, Any]) -> Dict[str, Any]:
        """
        Send one completion request.

        Args:
            parameters: prompt, messages, temperature, max_tokens

        Returns:
            Dict containing the reply text and usage metadata
        """
        pass

    @abstractmethod
    def validate(self) -> bool:
        """
        Check that endpoint and credentials are configured.

        Returns:
            bool: True if the connector can be used
        """
        pass

    @abstractmethod
    def transform(self, data: Any) -> Dict[str, Any]:
        """
        Normalise a raw service response.

        Args:
            data: Decoded response body

        Returns:
            Dict with "content" and "usage" keys
        """
        pass

    def _create_metadata(self, usage: Dict[str, Any], attempt: int) -> Dict[str, Any]:
        return {
            "service_id": self.service_id,
            "model": self.model,
            "attempt": attempt,
            "total_tokens": int(usage.get("total_tokens", 0) or 0),
        }
