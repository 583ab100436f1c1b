"""Exact kernels for piecewise-affine maps.

The compiled GMP backend (``_ckernel``) is used when it was built; otherwise
the pure-Python reference backend takes over. Set ``PLRENORM_PURE_PYTHON=1``
to force the fallback.
"""

import os

from . import _pykernel

if os.environ.get("PLRENORM_PURE_PYTHON"):
    _impl = _pykernel
else:
    try:
        from . import _ckernel as _impl
    except ImportError:
        _impl = _pykernel

KMap = _impl.KMap
BACKEND = _impl.BACKEND
HULL_CONVERGED = _pykernel.HULL_CONVERGED
HULL_OVERLAP = _pykernel.HULL_OVERLAP
HULL_UNCONVERGED = _pykernel.HULL_UNCONVERGED
PyKMap = _pykernel.KMap

__all__ = ["KMap", "PyKMap", "BACKEND", "HULL_CONVERGED", "HULL_OVERLAP",
           "HULL_UNCONVERGED"]
