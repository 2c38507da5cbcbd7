"""Pick the kernel backend once, at import time.

``J1J2_BACKEND=python`` forces the pure-Python kernels even when the compiled
extension is importable.
"""

import os

from . import _pykernels

python_kernels = _pykernels

if os.environ.get("J1J2_BACKEND", "").lower() == "python":
    kernels = _pykernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _pykernels

BACKEND = kernels.BACKEND


def compiled_kernels():
    """Return the compiled module, or None when it was not built."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels
