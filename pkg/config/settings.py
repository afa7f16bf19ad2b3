import os
from pathlib import Path
from dataclasses import dataclass
from typing import ClassVar
from dotenv import load_dotenv

load_dotenv()

@dataclass(slots=True)
class Settings:

    # Artifacts
    OUTPUT_ROOT: str = os.getenv("OUTPUT_ROOT", "runs")

    # Environment
    ENVIRONMENT: str = os.getenv("ENVIRONMENT", "DEV")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_DIR: str = os.getenv("LOG_DIR", "log")

    # Thread pool used for per-cell and per-query work
    WORKERS: int = int(os.getenv("WORKERS", "2"))

    # Class variable
    BASE_DIR: ClassVar[Path] = Path(__file__).resolve().parent.parent

    def __post_init__(self) -> None:
        if self.WORKERS < 1:
            raise RuntimeError(f"WORKERS must be >= 1, got {self.WORKERS}")
        if self.ENVIRONMENT != "DEV":
            required = {
                "OUTPUT_ROOT": os.getenv("OUTPUT_ROOT"),
            }
            missing = [k for k, v in required.items() if not v]
            if missing:
                raise RuntimeError(
                    f"Missing required environment variables: {', '.join(missing)}"
                )


config = Settings()
