"""Kernel selection: the compiled extension if importable, else NumPy.

``CMBEC_BACKEND=python`` forces the fallback; ``CMBEC_BACKEND=compiled``
makes a missing extension an import error.
"""

import logging
import os

from . import _pykernel

log = logging.getLogger(__name__)

MIDPOINT = _pykernel.MIDPOINT
EULER = _pykernel.EULER
SCHEMES = {"midpoint": MIDPOINT, "euler": EULER}

_choice = os.environ.get("CMBEC_BACKEND", "auto").lower()
_compiled = None
if _choice != "python":
    try:
        from . import _ckernel as _compiled
    except ImportError:
        if _choice == "compiled":
            raise
        log.info("compiled kernel unavailable, using NumPy fallback")

KERNELS = {"python": _pykernel.advance}
if _compiled is not None:
    KERNELS["compiled"] = _compiled.advance

DEFAULT = "compiled" if "compiled" in KERNELS else "python"


def get_kernel(name: str | None = None):
    name = name or DEFAULT
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"kernel {name!r} not available; have {sorted(KERNELS)}") from None
