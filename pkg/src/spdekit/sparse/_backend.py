"""Kernel backend selection.

The compiled extension is preferred; ``SPDEKIT_PURE_PYTHON=1`` in the
environment forces the pure-Python mirror (useful for benchmarking and
for installs without a C compiler).
"""

import os

if os.environ.get("SPDEKIT_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels_cy as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as kernels


def active_backend():
    """Name of the kernel set in use: 'cython' or 'python'."""
    return kernels.BACKEND_NAME


def available_backends():
    out = {}
    from . import _kernels_py

    out["python"] = _kernels_py
    try:
        from . import _kernels_cy

        out["cython"] = _kernels_cy
    except ImportError:
        pass
    return out
