"""Global worker-count knob honored by all parallel paths.

Defaults to the GMGM_THREADS environment variable, else 1 (fully
deterministic reference mode).
"""

from __future__ import annotations

import os

_num_threads = None


def get_num_threads():
    if _num_threads is not None:
        return _num_threads
    env = os.environ.get("GMGM_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def set_num_threads(n):
    global _num_threads
    if n is not None and n < 1:
        raise ValueError("thread count must be >= 1")
    _num_threads = n
