# src/core/config.py - Runtime settings for the simulator, CLI and API
import logging
import sys

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runtime settings read from OTA_* environment variables or a .env file"""

    model_config = SettingsConfigDict(
        env_prefix="OTA_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Application Settings
    PROJECT_NAME: str = "Over-the-Air Computation Simulator"
    VERSION: str = "1.0.0"
    DESCRIPTION: str = (
        "Reliable computation of nomographic functions and Kolmogorov superpositions "
        "over clustered Gaussian multiple-access channels with nested lattice codes"
    )
    ENVIRONMENT: str = "development"
    DEBUG: bool = False
    HOST: str = "0.0.0.0"
    PORT: int = 8000

    # Lattice decoding
    ENUMERATION_LIMIT: int = 10**6
    FLOAT_TOL: float = 1e-9

    # Monte Carlo
    DEFAULT_SEED: int = 2024
    DEFAULT_TRIALS: int = 1000
    MAX_API_TRIALS: int = 20000
    WORKERS: int = 1
    BATCH_SIZE: int = 256

    # b0 search and range validation
    B0_GRID_PER_ARG: int = 10**4
    B0_MAX_BITS: int = 40
    RANGE_GRID_POINTS: int = 10**4

    # Logging Configuration
    LOG_LEVEL: str = "INFO"


# Create global settings instance
settings = Settings()

# Export individual constants for modules that only need one value
ENUMERATION_LIMIT = settings.ENUMERATION_LIMIT
FLOAT_TOL = settings.FLOAT_TOL
DEFAULT_SEED = settings.DEFAULT_SEED

_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str = None) -> None:
    """Attach a stderr handler to the root logger once; stdout stays free for data output"""
    root = logging.getLogger()
    root.setLevel((level or settings.LOG_LEVEL).upper())
    if any(getattr(h, "_ota_handler", False) for h in root.handlers):
        return
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(_LOG_FORMAT))
    handler._ota_handler = True
    root.addHandler(handler)
