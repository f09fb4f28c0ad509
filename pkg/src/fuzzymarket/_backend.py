"""Select the compiled kernel when available, else the numpy fallback.

Set ``FUZZYMARKET_PURE=1`` to force the fallback.
"""
import os

from . import _purepy

KERNELS = {"python": _purepy.bcfon_step}

try:
    from ._kernels import bcfon_step as _compiled_step
except ImportError:  # extension not built
    _compiled_step = None
else:
    KERNELS["cython"] = _compiled_step

if _compiled_step is not None and os.environ.get("FUZZYMARKET_PURE", "") in ("", "0"):
    BACKEND = "cython"
else:
    BACKEND = "python"

bcfon_step = KERNELS[BACKEND]
