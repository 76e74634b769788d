"""Kernel backend selection.

The compiled extension is preferred when it imports cleanly; the NumPy
fallback is always available.  Set UGVPLAN_KERNEL=python or =compiled to
force a backend (the latter raises if the extension is missing).
"""
from __future__ import annotations

import os

from . import fallback
from .fallback import N_PARAMS, PARAM_NAMES

_requested = os.environ.get("UGVPLAN_KERNEL", "").strip().lower()

if _requested == "python":
    _impl = fallback
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "UGVPLAN_KERNEL=compiled but the ugvplan._kernels._core "
                "extension is not built; install with the C extension or "
                "unset UGVPLAN_KERNEL"
            ) from None
        _impl = fallback

BACKEND = "compiled" if _impl is not fallback else "python"

dynamics_batch = _impl.dynamics_batch
dynamics_jacobian_batch = _impl.dynamics_jacobian_batch
wheel_loads_batch = _impl.wheel_loads_batch
wheel_loads_jacobian_batch = _impl.wheel_loads_jacobian_batch
rk4_pwl = _impl.rk4_pwl

__all__ = [
    "BACKEND",
    "N_PARAMS",
    "PARAM_NAMES",
    "dynamics_batch",
    "dynamics_jacobian_batch",
    "wheel_loads_batch",
    "wheel_loads_jacobian_batch",
    "rk4_pwl",
    "fallback",
]
