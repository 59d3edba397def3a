"""Backend selection for the bar kernels.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``CEFIS_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy implementation is used.
"""
import os

from . import _kernels_py

BACKEND = "python"
solve_tip_load = _kernels_py.solve_tip_load

if os.environ.get("CEFIS_PURE_PYTHON", "") in ("", "0"):
    try:
        from ._kernels import solve_tip_load  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass
