"""Hot-loop kernels, compiled when available.

The Cython extension ``snnlab._kernels`` is used if it was built; otherwise
the numpy implementations in ``snnlab._fallback`` are used. Set
``SNNLAB_PURE_PYTHON=1`` to force the fallback.
"""

import os

from snnlab import _fallback

RESET_NONE, RESET_SOFT, RESET_HARD = _fallback.RESET_NONE, _fallback.RESET_SOFT, _fallback.RESET_HARD

_impl = _fallback
BACKEND = "python"
if os.environ.get("SNNLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from snnlab import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass


def get_backend(name: str):
    """Return the kernel module for ``"python"`` or ``"cython"``."""
    if name == "python":
        return _fallback
    if name == "cython":
        from snnlab import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


lif_update = _impl.lif_update
column_moments = _impl.column_moments
arctan_surrogate = _impl.arctan_surrogate
