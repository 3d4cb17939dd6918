"""Select the Sinkhorn sweep backend at import time.

The compiled Cython kernel is used when it was built; otherwise the numpy
fallback.  Set ``SB_KERNEL=python`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernel

python_sweeps = _pykernel.sinkhorn_sweeps

try:
    from ._ckernel import sinkhorn_sweeps as compiled_sweeps
except ImportError:  # extension not built
    compiled_sweeps = None

if compiled_sweeps is not None and os.environ.get("SB_KERNEL", "").lower() != "python":
    sinkhorn_sweeps = compiled_sweeps
    BACKEND = "cython"
else:
    sinkhorn_sweeps = python_sweeps
    BACKEND = "python"

__all__ = ["BACKEND", "compiled_sweeps", "python_sweeps", "sinkhorn_sweeps"]
