"""Small shared helpers."""

from __future__ import annotations

import os

from .errors import InvalidConfig

THREADS_ENV = "CRITPROC_THREADS"


def worker_count() -> int:
    """Worker cap for tree fitting and attribution loops.

    Defaults to the machine's CPU count; the CRITPROC_THREADS variable
    overrides it. Parallelism never changes results, only wall time.
    """
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise InvalidConfig(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise InvalidConfig(f"{THREADS_ENV} must be >= 1")
    return n
