import os
from dataclasses import dataclass
from functools import lru_cache

from dotenv import load_dotenv


load_dotenv()


@dataclass(frozen=True)
class Settings:
    database_url: str
    workers: int
    enumeration_cap: int
    output_dir: str
    log_level: str


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"{name} must be an integer, got {raw!r}") from exc


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    workers = _int_env("PRIVATE_BANDITS_WORKERS", 1)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return Settings(
        database_url=os.getenv("DATABASE_URL", "sqlite:///./private_bandits.db"),
        workers=workers,
        enumeration_cap=_int_env("PRIVATE_BANDITS_ENUMERATION_CAP", 10_000_000),
        output_dir=os.getenv("PRIVATE_BANDITS_OUTPUT_DIR", "results"),
        log_level=os.getenv("LOG_LEVEL", "WARNING").upper(),
    )
