"""Kernel backend selection: compiled extension if available, else pure Python.

Set SAFETELEOP_PURE_PYTHON=1 to force the fallback (used by the parity
tests and the kernel benchmark).
"""

import os

from . import _flowpy

STATUS_OK = _flowpy.STATUS_OK
STATUS_DEGENERATE = _flowpy.STATUS_DEGENERATE

if os.environ.get("SAFETELEOP_PURE_PYTHON") == "1":
    backend = _flowpy
    backend_name = "python"
else:
    try:
        from . import _flowkernel as backend  # type: ignore[no-redef]

        backend_name = "cython"
    except ImportError:
        backend = _flowpy
        backend_name = "python"

flow_with_sensitivity = backend.flow_with_sensitivity
rollout = backend.rollout
closed_loop_field = backend.closed_loop_field
closed_loop_jac = backend.closed_loop_jac
