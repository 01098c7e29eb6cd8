from typing import Dict, Any, Optional, List
from enum import Enum
from pathlib import Path
import hashlib
import json
import threading
import logging

from config import Config

logger = logging.getLogger(__name__)


class ReplayMode(str, Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


class ReplayStore:
    """
    File-backed store of LLM replies keyed by request fingerprint.
    One JSON file per fingerprint under the fixtures directory.
    """

    def __init__(self, mode: str = None, fixtures_path: str = None):
        self.mode = ReplayMode(mode or Config.LLM_MODE)
        self.fixtures_path = Path(fixtures_path or Config.LLM_FIXTURES_PATH)
        self._write_lock = threading.Lock()

    def generate_fingerprint(self, prompt: str, response_schema: Dict[str, Any]) -> str:
        """
        Hash of prompt and schema, stable under schema key reordering.

        Args:
            prompt: Request prompt
            response_schema: JSON Schema of the expected reply

        Returns:
            str: sha256 hex digest
        """
        request_string = json.dumps({
            "prompt": prompt,
            "schema": response_schema
        }, sort_keys=True)
        return hashlib.sha256(request_string.encode("utf-8")).hexdigest()

    def _path(self, fingerprint: str) -> Path:
        return self.fixtures_path / f"{fingerprint}.json"

    def get(self, fingerprint: str) -> Optional[Dict[str, Any]]:
        """
        Stored reply for a fingerprint.

        Returns:
            The reply object or None if not recorded
        """
        path = self._path(fingerprint)
        if not path.exists():
            logger.info(f"Replay miss for {fingerprint[:12]}")
            return None
        with open(path, "r", encoding="utf-8") as f:
            entry = json.load(f)
        logger.info(f"Replay hit for {fingerprint[:12]}")
        return entry["reply"]

    def save(self, fingerprint: str, prompt: str, response_schema: Dict[str, Any],
             reply: Dict[str, Any]) -> bool:
        """
        Record a validated reply once per fingerprint.

        Returns:
            bool: True if a new fixture file was written
        """
        with self._write_lock:
            path = self._path(fingerprint)
            if path.exists():
                return False
            self.fixtures_path.mkdir(parents=True, exist_ok=True)
            entry = {
                "fingerprint": fingerprint,
                "prompt": prompt,
                "response_schema": response_schema,
                "reply": reply,
            }
            path.write_text(json.dumps(entry, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            logger.info(f"Recorded reply {fingerprint[:12]}")
            return True

    def list_fingerprints(self) -> List[str]:
        if not self.fixtures_path.exists():
            return []
        return sorted(path.stem for path in self.fixtures_path.glob("*.json"))

    def get_stats(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "fixtures_path": str(self.fixtures_path),
            "entries": len(self.list_fingerprints()),
        }
