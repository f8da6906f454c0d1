"""Kernel backend selection.

The compiled extension (``_kernels``) is used when it imports; otherwise, or
when ``MEMS_FBP_PURE=1`` is set in the environment, the numpy implementations
in ``_kernels_py`` are used.  ``BACKEND`` names the active choice.
"""
import os

from . import _kernels_py

if os.environ.get("MEMS_FBP_PURE", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

stencil_coo = _impl.stencil_coo
thomas = _impl.thomas
interp_columns = _impl.interp_columns

__all__ = ["BACKEND", "stencil_coo", "thomas", "interp_columns"]
