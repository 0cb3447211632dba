"""Select the compiled transport kernels when available.

Set ``MOISTFEM_PURE_PYTHON=1`` to force the numpy fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
dg_residual = _kernels_py.dg_residual
vertex_limit = _kernels_py.vertex_limit

if os.environ.get("MOISTFEM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        BACKEND = "compiled"
        dg_residual = _compiled.dg_residual
        vertex_limit = _compiled.vertex_limit
