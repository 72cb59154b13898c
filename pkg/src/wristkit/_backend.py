"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy implementation in ``_kernels_py`` takes over with identical semantics.
"""
from __future__ import annotations

from types import ModuleType

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

kernels: ModuleType = _compiled if _compiled is not None else _kernels_py
BACKEND: str = kernels.NAME


def available() -> list[str]:
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "cython")
    return names


def get(name: str | None = None) -> ModuleType:
    """Return a kernel module by name (``"cython"`` or ``"python"``); default is the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
