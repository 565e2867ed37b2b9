"""Hot loops for lattice arithmetic.

The (a,b,0) recursion has a numba version and a pure-numpy twin with the same
signature. Setting ``CYBERALLOC_NUMBA=0`` in the environment (before import)
routes ``panjer`` to the twin; numba missing has the same effect. Plain
convolution stays with ``np.convolve``, which a compiled loop does not beat.
"""

import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

NUMBA_AVAILABLE = njit is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("CYBERALLOC_NUMBA", "1").lower() not in (
    "0",
    "false",
    "no",
    "off",
)


def _panjer_py(a, b, fz, seed, tol, max_len):
    fz = np.ascontiguousarray(fz, dtype=np.float64)
    nz = fz.shape[0]
    scale = 1.0 / (1.0 - a * fz[0])
    cap = min(max_len, 1024)
    out = np.zeros(cap)
    out[0] = seed
    cum = seed
    x = 1
    while cum < 1.0 - tol and x < max_len:
        if x >= cap:
            cap = min(2 * cap, max_len)
            grown = np.zeros(cap)
            grown[:x] = out[:x]
            out = grown
        top = min(x, nz - 1)
        j = np.arange(1, top + 1)
        s = np.dot((a + b * j / x) * fz[1 : top + 1], out[x - j])
        out[x] = s * scale
        cum += out[x]
        x += 1
    return out[:x]


if NUMBA_AVAILABLE:

    @njit(cache=True)
    def _panjer_nb(a, b, fz, seed, tol, max_len):
        nz = fz.shape[0]
        scale = 1.0 / (1.0 - a * fz[0])
        cap = min(max_len, 1024)
        out = np.zeros(cap)
        out[0] = seed
        cum = seed
        x = 1
        while cum < 1.0 - tol and x < max_len:
            if x >= cap:
                cap = min(2 * cap, max_len)
                grown = np.zeros(cap)
                grown[:x] = out[:x]
                out = grown
            top = min(x, nz - 1)
            s = 0.0
            inv_x = 1.0 / x
            for j in range(1, top + 1):
                s += (a + b * j * inv_x) * fz[j] * out[x - j]
            out[x] = s * scale
            cum += out[x]
            x += 1
        return out[:x]

else:  # pragma: no cover
    _panjer_nb = _panjer_py


def panjer(a, b, fz, seed, tol, max_len):
    """(a,b,0) recursion from ``seed`` until cumulative mass >= 1 - tol or max_len points."""
    fz = np.ascontiguousarray(fz, dtype=np.float64)
    if USE_NUMBA:
        return _panjer_nb(float(a), float(b), fz, float(seed), float(tol), int(max_len))
    return _panjer_py(a, b, fz, seed, tol, max_len)

