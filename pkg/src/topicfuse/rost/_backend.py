"""Kernel selection: compiled extension when importable, pure Python otherwise.

Set ``TOPICFUSE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _gibbs_py

try:
    if os.environ.get("TOPICFUSE_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python kernel requested")
    from . import _gibbs_ext as _compiled
except ImportError:
    _compiled = None

KERNELS = {"python": _gibbs_py.gibbs_pass}
if _compiled is not None:
    KERNELS["cython"] = _compiled.gibbs_pass

DEFAULT_BACKEND = "cython" if _compiled is not None else "python"


def get_kernel(name=None):
    name = name or DEFAULT_BACKEND
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(KERNELS)}") from None
