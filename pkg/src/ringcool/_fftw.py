"""ctypes binding to the system FFTW3 for planned, in-place c128 transforms.

Plans are bound to a specific buffer; executing a plan transforms that buffer.
Falls back to None handles when the library is unavailable (callers then use
the scipy path).
"""

from __future__ import annotations

import ctypes
import os

import numpy as np

FFTW_FORWARD = -1
FFTW_BACKWARD = 1
FFTW_MEASURE = 0

_lib = None
try:
    _lib = ctypes.CDLL("libfftw3.so.3")
    _lib.fftw_plan_many_dft.restype = ctypes.c_void_p
    _lib.fftw_plan_many_dft.argtypes = [
        ctypes.c_int, ctypes.c_void_p, ctypes.c_int,
        ctypes.c_void_p, ctypes.c_void_p, ctypes.c_int, ctypes.c_int,
        ctypes.c_void_p, ctypes.c_void_p, ctypes.c_int, ctypes.c_int,
        ctypes.c_int, ctypes.c_uint]
    _lib.fftw_execute.restype = None
    _lib.fftw_execute.argtypes = [ctypes.c_void_p]
    _lib.fftw_destroy_plan.restype = None
    _lib.fftw_destroy_plan.argtypes = [ctypes.c_void_p]
    _lib.fftw_export_wisdom_to_filename.argtypes = [ctypes.c_char_p]
    _lib.fftw_import_wisdom_from_filename.argtypes = [ctypes.c_char_p]
except OSError:
    _lib = None

fftw_execute = _lib.fftw_execute if _lib is not None else None

_WISDOM = os.path.join(os.path.expanduser("~"), ".cache", "ringcool", "fftw.wisdom")
_wisdom_loaded = False


def available() -> bool:
    return _lib is not None


def _load_wisdom():
    global _wisdom_loaded
    if not _wisdom_loaded and os.path.exists(_WISDOM):
        _lib.fftw_import_wisdom_from_filename(_WISDOM.encode())
    _wisdom_loaded = True


def _save_wisdom():
    try:
        os.makedirs(os.path.dirname(_WISDOM), exist_ok=True)
        _lib.fftw_export_wisdom_to_filename(_WISDOM.encode())
    except OSError:
        pass


class PlanSet:
    """In-place forward/backward plans on one contiguous (rows, n) c128 buffer.

    Planning with FFTW_MEASURE clobbers the buffer, so plans are made before
    the buffer is filled. Handles are plain ints usable from jitted code.
    """

    def __init__(self, buf: np.ndarray):
        if _lib is None:
            raise RuntimeError("libfftw3 is not available")
        if buf.dtype != np.complex128 or not buf.flags.c_contiguous or buf.ndim != 2:
            raise ValueError("need a C-contiguous complex128 (rows, n) buffer")
        _load_wisdom()
        rows, n = buf.shape
        self.buf = buf
        self._narr = (ctypes.c_int * 1)(n)
        ptr = buf.ctypes.data_as(ctypes.c_void_p)

        def plan(howmany, sign):
            h = _lib.fftw_plan_many_dft(
                1, ctypes.cast(self._narr, ctypes.c_void_p), howmany,
                ptr, None, 1, n, ptr, None, 1, n, sign, FFTW_MEASURE)
            if not h:
                raise RuntimeError("fftw planning failed")
            return h

        self.fwd = plan(rows, FFTW_FORWARD)
        self.bwd = plan(rows, FFTW_BACKWARD)
        # single-row plans on the same base address, for the idle-component path
        self.fwd1 = plan(1, FFTW_FORWARD)
        self.bwd1 = plan(1, FFTW_BACKWARD)
        _save_wisdom()
        buf[:] = 0.0

    def __del__(self):
        if _lib is None:
            return
        for h in ("fwd", "bwd", "fwd1", "bwd1"):
            p = getattr(self, h, None)
            if p:
                _lib.fftw_destroy_plan(p)
