"""Kernel backend selection.

Prefers the compiled extension; falls back to the pure-Python kernels when
the extension is missing or when the environment variable
TOPOMOE_PURE_PYTHON=1 is set. Both backends produce identical outputs.
"""

import os

from . import _pykernels

if os.environ.get("TOPOMOE_PURE_PYTHON", "") == "1":
    _impl = _pykernels
    HAS_COMPILED = False
else:
    try:
        from . import _ckernels as _impl

        HAS_COMPILED = True
    except ImportError:
        _impl = _pykernels
        HAS_COMPILED = False

BACKEND = "compiled" if HAS_COMPILED else "pure-python"

all_pairs_bfs = _impl.all_pairs_bfs
merge_positive_mask = _impl.merge_positive_mask
reduce_columns = _impl.reduce_columns


def available_backends():
    """Name → module map of importable backends (for tests/benchmarks)."""
    backends = {"pure-python": _pykernels}
    try:
        from . import _ckernels

        backends["compiled"] = _ckernels
    except ImportError:
        pass
    return backends
