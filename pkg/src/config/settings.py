import os
from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings and configuration."""

    model_config = SettingsConfigDict(env_prefix="FOLIAGE_ECHO_", extra="ignore")

    # Execution Configuration
    THREADS: int = 0  # 0 = one worker per CPU
    OUTPUT_DIR: str = "runs"

    # Logging Configuration
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: Literal["console", "json"] = "console"

    def resolve_threads(self, override: int | None = None) -> int:
        threads = self.THREADS if override is None else override
        if threads < 0:
            raise ValueError(f"thread count must be >= 0, got {threads}")
        return threads or (os.cpu_count() or 1)

    @classmethod
    def get_settings(cls) -> "Settings":
        return cls()


settings = Settings.get_settings()
