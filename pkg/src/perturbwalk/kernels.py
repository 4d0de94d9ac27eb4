"""Backend selection: compiled kernels if built, numpy fallback otherwise.

Set ``PERTURBWALK_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

_compiled = None
if os.environ.get("PERTURBWALK_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

active = _compiled if _compiled is not None else _kernels_py


def get(name: str | None = None):
    if name is None:
        return active
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {sorted(BACKENDS)}") from None
