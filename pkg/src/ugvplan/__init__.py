"""Receding-horizon trajectory planning for a high-speed ground vehicle."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
