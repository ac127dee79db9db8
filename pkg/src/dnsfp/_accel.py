"""Backend selection for the numeric kernels.

Set ``DNSFP_DISABLE_NUMBA=1`` to force the pure-numpy code paths. Both paths
produce bit-identical results; numba only changes speed.
"""
from __future__ import annotations

import logging
import os

logger = logging.getLogger(__name__)

_DISABLED = os.environ.get("DNSFP_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("disabled via DNSFP_DISABLE_NUMBA")
    import numba

    if "NUMBA_THREADING_LAYER" not in os.environ:
        # an outdated system TBB only produces a warning; skip straight past it
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    njit = numba.njit
    prange = numba.prange
    HAVE_NUMBA = True
except ImportError as exc:  # pragma: no cover - exercised with the env flag
    logger.debug("numba unavailable (%s); using numpy kernels", exc)
    numba = None
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def use_numba() -> bool:
    return HAVE_NUMBA


_threads = os.cpu_count() or 1


def set_threads(n: int | None) -> int:
    """Cap intra-run parallelism. Returns the effective thread count."""
    global _threads
    if n is None or n <= 0:
        n = os.cpu_count() or 1
    _threads = n
    if HAVE_NUMBA:
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
    return n


def get_threads() -> int:
    return _threads
