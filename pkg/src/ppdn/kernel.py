"""Selects the integration kernel at import time.

The compiled extension is used when it was built; otherwise, or when
``PPDN_PURE_PYTHON=1`` is set, the pure-Python implementation is used.
"""

import os

from . import _kernel_py

STATUS_OK = _kernel_py.STATUS_OK
STATUS_CROSSED = _kernel_py.STATUS_CROSSED
STATUS_NONFINITE = _kernel_py.STATUS_NONFINITE

python_run_segment = _kernel_py.run_segment

try:
    from ._kernel import run_segment as compiled_run_segment
except ImportError:  # extension not built
    compiled_run_segment = None

if compiled_run_segment is not None and os.environ.get("PPDN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    run_segment = compiled_run_segment
    BACKEND = "cython"
else:
    run_segment = python_run_segment
    BACKEND = "python"


def get_backend(name=None):
    """Return ``(name, run_segment)`` for ``"cython"``, ``"python"`` or the default."""
    if name is None:
        return BACKEND, run_segment
    if name == "python":
        return "python", python_run_segment
    if name == "cython":
        if compiled_run_segment is None:
            raise RuntimeError("compiled kernel not available; build the extension first")
        return "cython", compiled_run_segment
    raise ValueError(f"unknown backend {name!r}")
