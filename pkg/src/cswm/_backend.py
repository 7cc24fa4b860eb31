"""Kernel selection: compiled extension when importable, else pure Python.

Set ``CSWM_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pure

kernels = _pure
NAME = "python"

if os.environ.get("CSWM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:  # extension not built
        pass
    else:
        kernels = _kernels
        NAME = "cython"


def available():
    """Names of the backends that can be loaded in this environment."""
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return names
    return ["cython"] + names


def get(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return kernels
    if name == "python":
        return _pure
    if name == "cython":
        from . import _kernels as compiled
        return compiled
    raise ValueError(f"unknown backend {name!r}")
