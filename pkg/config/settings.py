# config/settings.py
from pydantic_settings import BaseSettings
from typing import Optional


class Settings(BaseSettings):
    # Application
    APP_ENV: str = "development"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Workers (None = all available cores)
    SIGMANI_THREADS: Optional[int] = None

    # Run defaults
    DEFAULT_SEED: int = 7
    DEFAULT_LEVEL: int = 4
    DEFAULT_STEPS: int = 256

    # Storage
    ORACLE_CACHE_DIR: str = ".oracle_cache"
    OUTPUT_DIR: str = "runs"

    class Config:
        env_file = ".env"
        case_sensitive = True


# Global settings instance
settings = Settings()
