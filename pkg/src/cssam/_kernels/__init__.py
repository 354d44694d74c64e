"""Hot-loop kernels with a compiled core and a NumPy fallback.

The Cython extension is preferred when built; set ``CSSAM_PURE_PYTHON=1`` to
force the reference implementation. Both backends implement the same
contracts (see ``pure``) and agree numerically.
"""

from __future__ import annotations

import os

if os.environ.get("CSSAM_PURE_PYTHON"):
    from . import pure as backend

    COMPILED = False
else:
    try:
        from . import _fast as backend  # type: ignore[attr-defined]

        COMPILED = True
    except ImportError:
        from . import pure as backend

        COMPILED = False

BACKEND_NAME: str = backend.NAME
sgns_epoch = backend.sgns_epoch
walk_fill = backend.walk_fill

__all__ = ["BACKEND_NAME", "COMPILED", "sgns_epoch", "walk_fill", "backend"]
