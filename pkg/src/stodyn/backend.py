"""Numerical backend selection.

Hot loops (ensemble stepping, stable-increment transforms, first-passage
scans) exist twice: a numba @njit version and a pure-numpy version with
identical semantics. The STODYN_BACKEND environment variable picks one:

    auto   use numba when importable, numpy otherwise (default)
    numba  require numba; raise if it cannot be imported
    numpy  force the pure-numpy path

The choice is read once per process; tests that need both monkeypatch
`_FORCED` instead of mutating the environment mid-run.
"""

import os

from .errors import ValidationError

_ENV = "STODYN_BACKEND"
_VALID = ("auto", "numba", "numpy")

# test hook; overrides the environment when not None
_FORCED = None


def _has_numba():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def backend_choice():
    """The raw setting: 'auto', 'numba', or 'numpy'."""
    if _FORCED is not None:
        return _FORCED
    value = os.environ.get(_ENV, "auto").strip().lower()
    if value not in _VALID:
        raise ValidationError(
            f"{_ENV} must be one of {_VALID}, got {value!r}")
    return value


def active_backend():
    """The resolved backend name actually in use: 'numba' or 'numpy'."""
    choice = backend_choice()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not _has_numba():
            raise ValidationError(f"{_ENV}=numba but numba is not importable")
        return "numba"
    return "numba" if _has_numba() else "numpy"
