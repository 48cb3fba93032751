"""Kernel backend selection.

The compiled extension is used when it imports; setting
``BGW_SKELETON_BACKEND=python`` forces the numpy fallback.  Both expose the
same functions and return identical results.
"""
from __future__ import annotations

import os
import warnings

from . import _kernels_py

_requested = os.environ.get("BGW_SKELETON_BACKEND", "auto").lower()

if _requested == "python":
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "cython":
            raise
        warnings.warn(
            "compiled kernels unavailable, using the numpy fallback (slow for large runs)",
            RuntimeWarning,
            stacklevel=2,
        )
        kernels = _kernels_py

BACKEND: str = kernels.NAME
python_kernels = _kernels_py


def compiled_kernels():
    """The compiled module, or None when it is not built."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels
