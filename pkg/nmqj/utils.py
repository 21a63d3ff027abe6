import os
from pathlib import Path

from nmqj.config import ConfigParseError

DEFAULT_OUT_DIR: Path = Path("results")
THREADS_ENV = "NMQJ_THREADS"


def worker_count() -> int:
    """Size of the sweep task pool, capped by NMQJ_THREADS."""
    available = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return available

    try:
        cap = int(raw)
    except ValueError as e:
        raise ConfigParseError(f"{THREADS_ENV}: expected an integer, got {raw!r}") from e
    if cap < 1:
        raise ConfigParseError(f"{THREADS_ENV}: must be at least 1, got {cap}")

    return min(cap, available)
