"""Backend selection for the round loop.

``SUBGRADFED_BACKEND`` picks the default: ``auto`` (compiled kernel when it
imports, numpy otherwise), ``cython`` (fail if the kernel is missing) or
``python``.
"""

from __future__ import annotations

import os

from . import _pyloop

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

NAMES = ("auto", "cython", "python")


def available() -> list[str]:
    return ["cython", "python"] if _ckernel is not None else ["python"]


def get(name: str | None = None):
    name = (name or os.environ.get("SUBGRADFED_BACKEND", "auto")).lower()
    if name not in NAMES:
        raise ValueError(f"unknown backend {name!r}; choose from {NAMES}")
    if name == "python":
        return _pyloop
    if _ckernel is None:
        if name == "cython":
            raise ImportError("compiled kernel not built; run `pip install -e . --no-build-isolation`")
        return _pyloop
    return _ckernel


def default_name() -> str:
    return "cython" if get() is _ckernel else "python"
