"""Backend selection for the fixed-point kernel.

The compiled Cython extension is used when importable; setting
CORRLSS_DISABLE_EXT=1 forces the NumPy fallback. Both implement the same
iteration, so results agree to solver tolerance either way.
"""
import os

from . import _fixed_point_py

if os.environ.get("CORRLSS_DISABLE_EXT"):
    _impl = _fixed_point_py
    BACKEND = "python"
else:
    try:
        from . import _fixed_point as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _fixed_point_py
        BACKEND = "python"

fp_batch = _impl.fp_batch
fp_batch_fallback = _fixed_point_py.fp_batch

__all__ = ["fp_batch", "fp_batch_fallback", "BACKEND"]
