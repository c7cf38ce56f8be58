"""Worker-count policy: CALREF_THREADS caps parallelism, defaulting to the
hardware concurrency."""

from __future__ import annotations

import os


def worker_count() -> int:
    env = os.environ.get("CALREF_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1
