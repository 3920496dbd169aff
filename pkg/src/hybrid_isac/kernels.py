"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set ``HYBRID_ISAC_PURE_PYTHON=1`` to force the numpy path.
"""
import os

from . import _kernels_py

if os.environ.get("HYBRID_ISAC_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"

angle_spectrum = _compiled.angle_spectrum if _compiled is not None else _kernels_py.angle_spectrum
