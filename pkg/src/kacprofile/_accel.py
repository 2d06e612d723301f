"""Backend selection for the hot kernels.

Every kernel in :mod:`kacprofile._kernels` exists twice: a numba ``@njit``
loop and a vectorised numpy version. The numba path is used when numba is
importable and the environment variable ``KACPROFILE_NUMBA`` is not set to
``0``/``false``/``no``/``off``. The choice can be overridden at runtime with
:func:`use_backend`.
"""

import contextlib
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

ENV_FLAG = "KACPROFILE_NUMBA"
_FALSY = {"0", "false", "no", "off"}


def _initial_backend():
    if not HAVE_NUMBA:
        return "numpy"
    if os.environ.get(ENV_FLAG, "1").strip().lower() in _FALSY:
        return "numpy"
    return "numba"


_backend = _initial_backend()


def backend():
    """Name of the active backend, ``"numba"`` or ``"numpy"``."""
    return _backend


def set_backend(name):
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextlib.contextmanager
def use_backend(name):
    """Temporarily switch the kernel backend."""
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def njit(func):
    """``numba.njit(cache=True, nogil=True)`` when numba exists, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)
