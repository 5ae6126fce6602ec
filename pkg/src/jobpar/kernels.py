"""Backend selection for the simulation event loops.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
pure-Python loops in ``_pykernels`` are used.  Setting the environment
variable ``JOBPAR_PURE_PYTHON=1`` forces the fallback.  Both backends
consume random numbers identically and return bit-identical results.
"""
from __future__ import annotations

import os

from . import _pykernels

try:
    if os.environ.get("JOBPAR_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _ckernels as _backend
    BACKEND = "cython"
except ImportError:
    _backend = _pykernels
    BACKEND = "python"

BACKENDS = {"python": _pykernels}
if BACKEND == "cython":
    BACKENDS["cython"] = _backend


def get(name: str | None = None):
    """Kernel module by name; ``None`` gives the active backend."""
    if name is None:
        return _backend
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
