"""Backend selection for the hot field kernels.

The compiled extension is preferred; the numpy fallback is used when it is
missing or when ``MIRRORTRAP_PURE_PYTHON`` is set to a non-empty value other
than ``0``.
"""
import os

from . import _kernels_py

BACKEND = "python"
polygon_eval = _kernels_py.polygon_eval
charge_eval = _kernels_py.charge_eval
triangle_integral = _kernels_py.triangle_integral

if os.environ.get("MIRRORTRAP_PURE_PYTHON", "0") in ("", "0"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        polygon_eval = _ckernels.polygon_eval
        charge_eval = _ckernels.charge_eval
        triangle_integral = _ckernels.triangle_integral
        BACKEND = "cython"

__all__ = ["BACKEND", "polygon_eval", "charge_eval", "triangle_integral"]
