"""Kernel backend selection.

Two interchangeable backends implement the hot numerical kernels (REML
profile fit, Gibbs imputation chain):

* ``_core`` — Cython extension, used when importable;
* ``pybackend`` — pure numpy fallback with identical semantics.

Selection happens at import time and can be forced with the environment
variable ``CRTMISS_KERNELS`` set to ``auto`` (default), ``compiled`` or
``python``.  ``compiled`` raises if the extension is unavailable.
"""

from __future__ import annotations

import os
from types import ModuleType

__all__ = ["get_backend", "active_backend", "backend_name"]

_VALID = ("auto", "compiled", "python")


def get_backend(name: str | None = None) -> ModuleType:
    """Return a kernel backend module by name.

    Args:
        name: ``auto``, ``compiled`` or ``python``; ``None`` reads the
            ``CRTMISS_KERNELS`` environment variable.
    """
    choice = name or os.environ.get("CRTMISS_KERNELS", "auto")
    if choice not in _VALID:
        raise ValueError(f"unknown kernel backend {choice!r}, expected one of {_VALID}")
    if choice == "python":
        from . import pybackend

        return pybackend
    try:
        from . import _core

        return _core
    except ImportError:
        if choice == "compiled":
            raise
        from . import pybackend

        return pybackend


_ACTIVE = get_backend()


def active_backend() -> ModuleType:
    """The backend selected at import time."""
    return _ACTIVE


def backend_name() -> str:
    return _ACTIVE.name
