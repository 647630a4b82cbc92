"""Kernel backend selection.

Two interchangeable implementations of the hot sequence kernels exist:

* ``numba`` - @njit-compiled loops (default when numba imports cleanly)
* ``numpy`` - pure-numpy reference path

The initial choice comes from the ``SLANGDEF_BACKEND`` environment variable
("numba", "numpy", or "auto"; default auto). ``use()`` switches at runtime,
which the benchmark and the cross-backend tests rely on. Within one backend
every kernel is deterministic; across backends results agree to ~1e-12.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import numpy_backend

_ENV_VAR = "SLANGDEF_BACKEND"
_active: ModuleType | None = None
_active_name = ""


def _load_numba_backend() -> ModuleType:
    from . import numba_backend
    return numba_backend


def use(name: str) -> str:
    """Select the kernel backend ("numba", "numpy", or "auto"). Returns the
    name actually activated."""
    global _active, _active_name
    if name == "numpy":
        _active = numpy_backend
        _active_name = "numpy"
    elif name == "numba":
        _active = _load_numba_backend()
        _active_name = "numba"
    elif name == "auto":
        try:
            _active = _load_numba_backend()
            _active_name = "numba"
        except ImportError:
            _active = numpy_backend
            _active_name = "numpy"
    else:
        raise ValueError(f"unknown backend {name!r}; expected numba, numpy, or auto")
    return _active_name


def active() -> ModuleType:
    """The currently selected backend module (selecting it on first use)."""
    if _active is None:
        use(os.environ.get(_ENV_VAR, "auto"))
    return _active


def active_name() -> str:
    active()
    return _active_name
