"""Event-loop kernel backends.

The compiled Cython kernel is preferred when its extension module built;
the pure-Python kernel implements identical semantics and is selected
automatically as a fallback (or forced with VELGAS_FORCE_PYKERNEL=1).
Both realize the same trajectories for the same seed; the benchmark
script and test suite compare them directly.
"""

import os

from .pykernel import (PyKernel, STATUS_ABSORBED, STATUS_EVENTS,  # noqa: F401
                       STATUS_TIME)

if os.environ.get("VELGAS_FORCE_PYKERNEL"):
    CKernel = None
else:
    try:
        from .core import CKernel  # type: ignore[attr-defined]
    except ImportError:
        CKernel = None

if CKernel is not None:
    Kernel = CKernel
    BACKEND = "compiled"
else:
    Kernel = PyKernel
    BACKEND = "python"


def available_backends():
    out = {"python": PyKernel}
    if CKernel is not None:
        out["compiled"] = CKernel
    return out
