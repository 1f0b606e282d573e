"""Kernel backend selection.

Prefers the compiled Cython core when it was built; otherwise falls back
to the vectorized numpy implementations. Set ARTGENRE_BACKEND=numpy or
ARTGENRE_BACKEND=cython to force a choice (forcing cython raises if the
extension is unavailable).
"""

import os

import numpy as np

from . import numpy_backend

_forced = os.environ.get("ARTGENRE_BACKEND", "").strip().lower()

if _forced == "numpy":
    _impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _cykernels as _impl

        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        _impl = numpy_backend
        BACKEND = "numpy"


def _c3(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d_forward(x, w, b):
    return _impl.conv2d_forward(_c3(x), _c3(w), _c3(b))


def conv2d_backward_input(gy, w):
    return _impl.conv2d_backward_input(_c3(gy), _c3(w))
