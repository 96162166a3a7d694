"""Select the kernel backend at import time.

The compiled extension is preferred when it built; otherwise the pure-Python
twin takes over transparently. ``CFPORDER_KERNELS=py`` (or ``cy``) forces a
backend, which the kernel benchmark and the cross-backend tests rely on.
"""

from __future__ import annotations

import os

_forced = os.environ.get("CFPORDER_KERNELS", "").strip().lower()

if _forced == "py":
    from . import _kernels_py as kernels
elif _forced == "cy":
    from . import _kernels_cy as kernels  # type: ignore[no-redef]
else:
    try:
        from . import _kernels_cy as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as kernels  # type: ignore[no-redef]

backend_name: str = kernels.BACKEND
