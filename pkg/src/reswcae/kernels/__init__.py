"""Hot inner loops, compiled with numba when available.

Set ``RESWCAE_DISABLE_NUMBA=1`` before import to force the pure-numpy path
(useful for debugging and for the benchmark's baseline column). Both paths
are tested against each other.
"""
import logging
import os

from . import _numpy

log = logging.getLogger(__name__)

_FLAG = "RESWCAE_DISABLE_NUMBA"


def _numba_requested():
    return os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


BACKEND = "numpy"
_impl = _numpy
if _numba_requested():
    try:
        from . import _numba as _impl  # noqa: F811
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        log.warning("numba unavailable, falling back to numpy kernels")

im2col = _impl.im2col
col2im = _impl.col2im
dwt_rows = _impl.dwt_rows
idwt_rows = _impl.idwt_rows

__all__ = ["BACKEND", "im2col", "col2im", "dwt_rows", "idwt_rows"]
