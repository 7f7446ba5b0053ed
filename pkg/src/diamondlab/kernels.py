"""Kernel backend selection.

The compiled extension is used when it imports; setting DPL_PURE_PYTHON=1
forces the numpy fallback.  Both backends consume random numbers in the same
order, so switching changes results only at rounding level.
"""

import os

from . import _pykernels

KIND_CODES = _pykernels.KIND_CODES

_backend = _pykernels
BACKEND = "python"
if os.environ.get("DPL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _backend  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        _backend = _pykernels

coarsen = _backend.coarsen
coarsen_to_root = _backend.coarsen_to_root
partition_root = _backend.partition_root
pool_combine = _backend.pool_combine
genealogy_square_sums = _backend.genealogy_square_sums


def backend_module(name: str):
    """Return the kernel module for 'python' or 'compiled' explicitly."""
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
