"""Backend selection for the hot loops.

The compiled extension is used when it imports and every Hamiltonian of a
problem has a table form; otherwise the numpy implementation runs. Set
``HJNET_PURE_PYTHON=1`` to force the numpy path.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:  # pragma: no cover - depends on the build
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

if os.environ.get("HJNET_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def compiled():
    """The compiled module, or ``None``."""
    return _compiled


def fallback():
    return _kernels_py
