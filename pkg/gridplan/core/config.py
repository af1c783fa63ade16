import os
import sys
from typing import Optional

from pydantic import Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Process settings loaded from environment variables (and an optional .env file).
    """
    # Batch execution
    GRIDPLAN_WORKERS: Optional[int] = Field(None, ge=1)

    # Logging
    GRIDPLAN_LOG_LEVEL: str = "INFO"

    # Solver defaults
    GRIDPLAN_SOLVER_TIME_LIMIT: Optional[float] = Field(None, gt=0)
    GRIDPLAN_SOLVER_NODE_LIMIT: int = Field(100000, ge=1)

    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )

    @field_validator("GRIDPLAN_LOG_LEVEL")
    @classmethod
    def known_level(cls, v: str) -> str:
        """Accept the standard logging level names only."""
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level {v!r}")
        return level

    @property
    def worker_count(self) -> int:
        """Configured worker count, falling back to the available cores."""
        return self.GRIDPLAN_WORKERS or os.cpu_count() or 1


try:
    settings = Settings()
except ValidationError as e:
    # Raised at import, before the CLI can map it; exit like any other ConfigError
    print(f"Invalid environment settings: {e}", file=sys.stderr)
    raise SystemExit(2) from e
