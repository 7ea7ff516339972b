"""Kernel dispatch: the compiled extension when it is built, numpy otherwise.

Set ``ABSDE_LAB_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _core_py

BACKEND = "python"
_impl = _core_py

if os.environ.get("ABSDE_LAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

gram = _impl.gram
apply_coefficients = _impl.apply_coefficients
backward_running_min = _impl.backward_running_min


def backends():
    """Map backend name to kernel module for every backend importable here."""
    out = {"python": _core_py}
    try:
        from . import _core
    except ImportError:
        return out
    out["cython"] = _core
    return out
