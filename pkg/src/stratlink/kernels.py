"""Kernel selection: compiled Cython when importable, numpy otherwise.

Set ``STRATLINK_PURE_PYTHON=1`` to force the numpy kernels.
"""
from __future__ import annotations

import os

from . import _pykernels

try:
    if os.environ.get("STRATLINK_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python kernels requested")
    from . import _kernels as _active
    BACKEND = "cython"
except ImportError:
    _active = _pykernels
    BACKEND = "python"

value_sweeps = _active.value_sweeps
forward_visitation = _active.forward_visitation

__all__ = ["BACKEND", "value_sweeps", "forward_visitation"]
