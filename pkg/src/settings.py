import os
import logging
from dataclasses import dataclass

from dotenv import load_dotenv

logger = logging.getLogger("Settings")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


@dataclass
class Settings:
    """Environment-backed defaults. Manifest values and CLI flags override these."""
    data_dir: str = "."
    output_dir: str = "out"
    threads: int = 1
    seed: int = 42
    log_level: str = "INFO"
    coarse_grid: bool = False


def load_settings() -> Settings:
    """Read MATCHKIT_* variables (after loading a .env file if present)."""
    load_dotenv()
    settings = Settings(
        data_dir=os.getenv("MATCHKIT_DATA_DIR", "."),
        output_dir=os.getenv("MATCHKIT_OUTPUT_DIR", "out"),
        threads=int(os.getenv("MATCHKIT_THREADS", "1")),
        seed=int(os.getenv("MATCHKIT_SEED", "42")),
        log_level=os.getenv("MATCHKIT_LOG_LEVEL", "INFO").upper(),
        coarse_grid=os.getenv("MATCHKIT_COARSE_GRID", "0") == "1",
    )
    if settings.threads < 1:
        logger.warning(f"MATCHKIT_THREADS={settings.threads} is invalid, using 1")
        settings.threads = 1
    return settings


def configure_logging(level: str = "INFO") -> None:
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)
