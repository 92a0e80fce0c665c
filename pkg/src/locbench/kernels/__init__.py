"""Kernel backend selection.

Two interchangeable implementations of the RANSAC + P3P inner loop
exist: a compiled Cython extension (``_ransac``) and a pure-Python twin
(``pyransac``). They are engineered to produce bit-identical output, so
selection only affects speed. Resolution order:

* explicit ``name`` argument, else
* the ``LOCBENCH_BACKEND`` environment variable (``auto``, ``python``
  or ``compiled``), else
* ``auto``: compiled when importable, otherwise python.
"""

from __future__ import annotations

import os

__all__ = ["get_backend", "available_backends", "backend_name"]


def _load(name: str):
    if name == "python":
        from . import pyransac

        return pyransac
    if name == "compiled":
        from . import _ransac

        return _ransac
    raise ValueError(f"unknown backend {name!r} (use auto, python or compiled)")


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` (or the configured default)."""
    name = name or os.environ.get("LOCBENCH_BACKEND", "auto")
    if name == "auto":
        try:
            return _load("compiled")
        except ImportError:
            return _load("python")
    return _load(name)


def available_backends() -> list[str]:
    out = []
    for name in ("python", "compiled"):
        try:
            _load(name)
        except ImportError:
            continue
        out.append(name)
    return out


def backend_name(name: str | None = None) -> str:
    return get_backend(name).NAME
