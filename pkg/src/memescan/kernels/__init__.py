"""Kernel backend selection.

The compiled Cython core is used when importable; otherwise the pure-Python
twin takes over. Set ``MEMESCAN_PURE=1`` to force the fallback (used by the
backend-parity tests and the benchmark).
"""

import os

from . import pure

if os.environ.get("MEMESCAN_PURE") == "1":
    backend = pure
else:
    try:
        from . import _core as backend  # type: ignore[no-redef]
    except ImportError:
        backend = pure

BACKEND_NAME = backend.NAME


def available_backends():
    """Return {name: module} for every importable backend."""
    found = {pure.NAME: pure}
    try:
        from . import _core
        found[_core.NAME] = _core
    except ImportError:
        pass
    return found
