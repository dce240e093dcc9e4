"""Backend selection for the hot kernels.

Numba is used when it imports cleanly and ``SAST_SNN_DISABLE_NUMBA`` is not
set to a truthy value. The pure-numpy path is always importable and is the
reference the numba kernels are tested against.
"""

import os

_FALSY = {"", "0", "false", "no", "off"}


def _env_disabled() -> bool:
    return os.environ.get("SAST_SNN_DISABLE_NUMBA", "").strip().lower() not in _FALSY


try:
    import numba  # noqa: F401

    NUMBA_INSTALLED = True
except ImportError:  # pragma: no cover - depends on the environment
    NUMBA_INSTALLED = False

USE_NUMBA = NUMBA_INSTALLED and not _env_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, identity decorator otherwise."""
    if NUMBA_INSTALLED:
        import numba

        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if args and callable(args[0]):
        return args[0]
    return wrap
