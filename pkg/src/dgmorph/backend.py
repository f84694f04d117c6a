"""Kernel backend selection.

The hot inner loops (edge fluxes, pointwise volume terms, slope limiting,
wet/dry repair) exist twice: a numba @njit version and a pure-numpy
vectorized version with identical signatures and semantics. Selection is
controlled by the environment variable ``DGMORPH_BACKEND``:

    DGMORPH_BACKEND=numba   force numba (ImportError if unavailable)
    DGMORPH_BACKEND=numpy   force the pure-numpy path
    unset / auto            numba when importable, numpy otherwise

``DGMORPH_THREADS`` caps the numba thread count (runs are single logical
jobs; reductions stay in fixed order either way).
"""

import os


def _load_numba_kernels():
    if os.environ.get("DGMORPH_THREADS"):
        import numba

        numba.set_num_threads(max(1, int(os.environ["DGMORPH_THREADS"])))
    from . import kernels_numba

    return kernels_numba


def _load_numpy_kernels():
    from . import kernels_numpy

    return kernels_numpy


_ACTIVE = None
_ACTIVE_NAME = None


def get_kernels(name=None):
    """Return the kernel module for `name` (or the env-selected default)."""
    global _ACTIVE, _ACTIVE_NAME
    if name is None:
        name = os.environ.get("DGMORPH_BACKEND", "auto").lower()
    if name == _ACTIVE_NAME and _ACTIVE is not None:
        return _ACTIVE
    if name == "numpy":
        mod = _load_numpy_kernels()
    elif name == "numba":
        mod = _load_numba_kernels()
    elif name == "auto":
        try:
            mod = _load_numba_kernels()
            name = "numba"
        except ImportError:
            mod = _load_numpy_kernels()
            name = "numpy"
    else:
        raise ValueError(f"unknown backend {name!r} (expected numba, numpy or auto)")
    _ACTIVE, _ACTIVE_NAME = mod, name
    return mod


def backend_name():
    get_kernels()
    return _ACTIVE_NAME
