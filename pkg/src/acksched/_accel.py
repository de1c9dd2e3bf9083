"""Backend selection for the hot kernels.

Every hot loop in the package exists twice: a scalar version compiled with
``numba.njit`` and a vectorised pure-numpy version.  The default backend is
numba when it imports; set ``ACKSCHED_BACKEND=numpy`` to force the numpy path.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional speedup
    numba = None

__all__ = ["HAVE_NUMBA", "default_backend", "resolve_backend", "njit"]

HAVE_NUMBA = numba is not None
_VALID = ("numba", "numpy")


def default_backend():
    name = os.environ.get("ACKSCHED_BACKEND", "numba").strip().lower()
    if name not in _VALID:
        raise ValueError(f"ACKSCHED_BACKEND must be one of {_VALID}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


def resolve_backend(backend=None):
    if backend is None:
        return default_backend()
    backend = backend.lower()
    if backend not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def njit(f=None, **options):
    """``numba.njit(cache=True)`` when numba is present, identity otherwise."""
    options.setdefault("cache", True)
    if numba is None:
        return (lambda g: g) if f is None else f
    if f is None:
        return lambda g: numba.njit(g, **options)
    return numba.njit(f, **options)
