"""Kernel backend selection.

The compiled extension (_core, built from _core.pyx) is preferred; the
pure numpy twin (_pure) is the fallback when the extension is missing or
when JITRISK_PURE=1 is set. Both implement the same contract with
bit-identical results.
"""

from __future__ import annotations

import os

from . import _pure

try:
    from . import _core  # type: ignore[attr-defined]
except ImportError:
    _core = None  # type: ignore[assignment]

_active = _pure if (_core is None or os.environ.get("JITRISK_PURE") == "1") else _core


def active():
    """The backend module currently in use."""
    return _active


def backend_name() -> str:
    return _active.NAME


def available() -> list[str]:
    return ["pure"] + (["compiled"] if _core is not None else [])


def use(name: str) -> None:
    """Switch backend ('pure' or 'compiled'); mainly for tests/benchmarks."""
    global _active
    if name == "pure":
        _active = _pure
    elif name == "compiled":
        if _core is None:
            raise RuntimeError("compiled kernel extension is not available")
        _active = _core
    else:
        raise ValueError(f"unknown backend {name!r}")
