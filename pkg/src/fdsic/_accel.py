"""Elementwise sample kernels with an optional numba backend.

Every kernel has a pure-numpy twin. The numba versions are used when numba
imports cleanly and ``FDSIC_DISABLE_NUMBA`` is unset (or set to ``0``).
Both paths must agree to floating-point round-off; the test suite checks
this and ``benchmarks/bench_kernels.py`` times them against each other.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("FDSIC_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by FDSIC_DISABLE_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# --------------------------------------------------------------------------
# numpy reference implementations
# --------------------------------------------------------------------------

def cubic_np(x: np.ndarray, a1: float, a3: float) -> np.ndarray:
    mag2 = x.real * x.real + x.imag * x.imag
    return x * (a1 + a3 * mag2)


def rapp_np(x: np.ndarray, gain: float, a_sat: float, p: float) -> np.ndarray:
    gx = gain * x
    u = np.abs(gx) / a_sat
    return gx / (1.0 + u ** (2.0 * p)) ** (1.0 / (2.0 * p))


def quantize_np(x: np.ndarray, step: float, top: float) -> np.ndarray:
    def rail(v):
        q = step * (np.floor(v / step) + 0.5)
        return np.clip(q, -top, top)

    return rail(x.real) + 1j * rail(x.imag)


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True, fastmath=False)
    def _cubic_nb(x, a1, a3):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            mag2 = v.real * v.real + v.imag * v.imag
            out[i] = v * (a1 + a3 * mag2)
        return out

    @njit(cache=True, fastmath=False)
    def _rapp_nb(x, gain, a_sat, p):
        out = np.empty_like(x)
        inv_sat2 = 1.0 / (a_sat * a_sat)
        expo = -1.0 / (2.0 * p)
        for i in range(x.shape[0]):
            g = gain * x[i]
            r = (g.real * g.real + g.imag * g.imag) * inv_sat2
            # |g/a_sat|^(2p) as r^p, with exact shortcuts for the usual integer p
            if p == 1.0:
                up = r
            elif p == 2.0:
                up = r * r
            elif p == 3.0:
                up = r * r * r
            else:
                up = r ** p
            out[i] = g * (1.0 + up) ** expo
        return out

    @njit(cache=True, fastmath=False)
    def _quantize_nb(x, step, top):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            re = step * (np.floor(x[i].real / step) + 0.5)
            im = step * (np.floor(x[i].imag / step) + 0.5)
            if re > top:
                re = top
            elif re < -top:
                re = -top
            if im > top:
                im = top
            elif im < -top:
                im = -top
            out[i] = complex(re, im)
        return out

    def cubic(x, a1, a3):
        return _cubic_nb(np.ascontiguousarray(x, dtype=np.complex128), float(a1), float(a3))

    def rapp(x, gain, a_sat, p):
        return _rapp_nb(np.ascontiguousarray(x, dtype=np.complex128), float(gain), float(a_sat), float(p))

    def quantize(x, step, top):
        return _quantize_nb(np.ascontiguousarray(x, dtype=np.complex128), float(step), float(top))

else:
    cubic = cubic_np
    rapp = rapp_np
    quantize = quantize_np


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
