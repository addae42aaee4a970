"""Kernel backend selection.

The Cython extension ``symcomp._kernels`` is used when it imports; otherwise
(or when ``SYMCOMP_PURE=1``) the NumPy fallback in ``symcomp._pykernels`` is
used.  Both expose the same functions.
"""
from __future__ import annotations

import os

from . import _pykernels as pure

compiled = None
if os.environ.get("SYMCOMP_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled = None

backend = compiled if compiled is not None else pure
BACKEND_NAME = "cython" if compiled is not None else "numpy"

csr_fixpoint = backend.csr_fixpoint
csr_enabled = backend.csr_enabled
product_fixpoint = backend.product_fixpoint
product_enabled = backend.product_enabled
product_count_enabled = backend.product_count_enabled
product_materialize = backend.product_materialize
rk4_scalar = backend.rk4_scalar
rk4_network = backend.rk4_network


def threads() -> int:
    """Parallelism cap from SYMCOMP_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("SYMCOMP_THREADS", "1")))
    except ValueError:
        return 1
