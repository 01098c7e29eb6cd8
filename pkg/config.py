import os
from dotenv import load_dotenv

load_dotenv()

class Config:
    LLM_BASE_URL = os.getenv("LLM_BASE_URL", "https://api.openai.com/v1")
    LLM_MODEL = os.getenv("LLM_MODEL", "gpt-4o")
    LLM_API_KEY = os.getenv("LLM_API_KEY")
    LLM_MODE = os.getenv("LLM_MODE", "replay")
    LLM_FIXTURES_PATH = os.getenv("LLM_FIXTURES_PATH", "data/llm_fixtures")
    LLM_TIMEOUT = int(os.getenv("LLM_TIMEOUT", 60))
    LLM_MAX_RETRIES = int(os.getenv("LLM_MAX_RETRIES", 2))
    LLM_BUDGET_TOKENS = int(os.getenv("LLM_BUDGET_TOKENS", 16000))
    MAX_RETRIES = int(os.getenv("MAX_RETRIES", 3))
    RETRY_BACKOFF_FACTOR = float(os.getenv("RETRY_BACKOFF_FACTOR", 2.0))
    PREDICTOR_GAMMA = float(os.getenv("PREDICTOR_GAMMA", 0.5))
    PREDICTOR_MAX_CANDIDATES = int(os.getenv("PREDICTOR_MAX_CANDIDATES", 5))
    GROUNDING_ACTION_CAP = int(os.getenv("GROUNDING_ACTION_CAP", 1_000_000))
    PLANNER_MAX_EXPANSIONS = int(os.getenv("PLANNER_MAX_EXPANSIONS", 1_000_000))
    ORACLE_STATE_CAP = int(os.getenv("ORACLE_STATE_CAP", 100_000))
