"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
mirror. Both produce identical numbers, so the choice only affects speed.
"""
from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

kernels = _compiled if _compiled is not None else _kernels_py


def available():
    return ["compiled", "python"] if _compiled is not None else ["python"]


def current():
    return "compiled" if kernels is _compiled and _compiled is not None else "python"


def use_backend(name):
    """Switch kernels process-wide; returns the previous backend name."""
    global kernels
    previous = current()
    if name == "python":
        kernels = _kernels_py
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this build")
        kernels = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous
