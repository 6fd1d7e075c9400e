from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Process-wide settings read from the environment (prefix ULRS_).

    Numerical parameters of the algorithms live in the typed models of
    `ulrs.models`; this class only carries runtime knobs.
    """

    model_config = SettingsConfigDict(env_prefix="ULRS_", extra="ignore")

    log_level: str = Field("INFO", description="Root log level")
    log_json: bool = Field(True, description="Render logs as JSON lines")
    workers: int = Field(
        1, ge=1, description="Threads used for per-signal coding and scoring"
    )
    max_combinations: int = Field(
        1_000_000, ge=1, description="Support budget of the exhaustive oracle"
    )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
