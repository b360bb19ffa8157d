from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # ------------------------------------------------------------------
    # Application
    # ------------------------------------------------------------------
    APP_NAME: str = "AGD-MBRL"
    DEBUG: bool = False
    ENV: str = "development"
    LOG_LEVEL: str = "INFO"

    # ------------------------------------------------------------------
    # Runs
    # ------------------------------------------------------------------
    OUTPUT_DIR: str = "runs"
    METRICS_FILE: str = "metrics.csv"
    TIMING_FILE: str = "timing.csv"
    CHECKPOINT_FILE: str = "checkpoint.npz"

    # ------------------------------------------------------------------
    # Numerics
    # ------------------------------------------------------------------
    FINITE_CHECKS: bool = True
    MAX_SAMPLE_RETRIES: int = 5

    # ------------------------------------------------------------------
    # Oracle
    # ------------------------------------------------------------------
    ENUMERATION_BUDGET: int = 1_000_000
    IMPROVEMENT_TOLERANCE: float = 1e-10
    IDENTITY_TOLERANCE: float = 1e-9

    # ------------------------------------------------------------------
    # Meta
    # ------------------------------------------------------------------
    model_config = SettingsConfigDict(
        env_prefix="AGD_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )


# Singleton settings object (import this everywhere)
settings = Settings()
