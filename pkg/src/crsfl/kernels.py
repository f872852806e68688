"""Kernel backend selection.

The compiled ``_kernels`` extension is used when importable; otherwise, or
when ``CRSFL_PURE_PYTHON=1`` is set, the numpy twin in ``_kernels_py``.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("CRSFL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

batch_fitness = _impl.batch_fitness
best_split = _impl.best_split
