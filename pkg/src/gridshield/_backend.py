"""Kernel backend selection.

The compiled kernel (gridshield._core, Cython) is preferred when importable;
otherwise the pure-Python twin is used. GRIDSHIELD_BACKEND=python|compiled
forces a choice ("compiled" raises if the extension is missing).
"""

from __future__ import annotations

import os


def _load():
    choice = os.environ.get("GRIDSHIELD_BACKEND", "auto").lower()
    if choice not in ("auto", "python", "compiled"):
        raise ValueError(f"GRIDSHIELD_BACKEND must be auto|python|compiled, got {choice!r}")
    if choice in ("auto", "compiled"):
        try:
            from . import _core  # type: ignore[attr-defined]
            return _core
        except ImportError:
            if choice == "compiled":
                raise
    from . import _pycore
    return _pycore


impl = _load()
BACKEND_NAME: str = impl.BACKEND_NAME


def get_backend(name: str | None = None):
    """Return a kernel module by name ("python" or "compiled"); default is the
    module selected at import."""
    if name is None:
        return impl
    if name == "python":
        from . import _pycore
        return _pycore
    if name == "compiled":
        from . import _core  # type: ignore[attr-defined]
        return _core
    raise ValueError(f"unknown backend {name!r}")
