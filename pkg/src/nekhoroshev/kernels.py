"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Set ``NEKHOROSHEV_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("NEKHOROSHEV_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pykernels

enumerate_closed = _impl.enumerate_closed
poly_gradient = _impl.poly_gradient
poly_value = _impl.poly_value


def backends():
    """Map of available backend names to kernel modules."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:  # pragma: no cover
        pass
    return out
