"""Select the compiled or NumPy step kernels.

Set ``ODYN_PURE=1`` to force the NumPy path.  Custom activations always use
it since the compiled kernel only knows the built-in ones.
"""
import os

import numpy as np

from . import _purepy
from ._purepy import NON_FINITE, NOT_PSD, OK

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

__all__ = ["OK", "NON_FINITE", "NOT_PSD", "compiled_available", "weight_steps", "overlap_steps"]


def compiled_available():
    return _core is not None and not os.environ.get("ODYN_PURE")


def _codes(act, act_t):
    if act.kernel_code is None or act_t.kernel_code is None:
        return None
    return act.kernel_code, act_t.kernel_code, act.clip or 0.0, act_t.clip or 0.0


def _use_compiled(act, act_t, backend):
    if backend == "python":
        return None
    codes = _codes(act, act_t)
    if backend == "compiled":
        if _core is None or codes is None:
            raise RuntimeError("compiled kernel unavailable for this configuration")
        return codes
    return codes if compiled_available() else None


def _c(a):
    # typed memoryviews refuse read-only buffers, and frozen states hand those out
    a = np.ascontiguousarray(a, dtype=float)
    return a if a.flags.writeable else a.copy()


def weight_steps(W, Wt, X, z, gamma, delta, act, act_t, backend="auto"):
    """Advance ``W`` in place over the samples ``X`` (n x d) and noises ``z``."""
    codes = _use_compiled(act, act_t, backend)
    if codes is None:
        return _purepy.weight_steps(W, Wt, X, z, gamma, delta, act, act_t)
    return _core.weight_steps(W, _c(Wt), _c(X), _c(z), float(gamma), float(delta), *codes)


def overlap_steps(Q, M, P, G, chi, z, gamma, delta, d, act, act_t, backend="auto"):
    """Advance ``Q`` and ``M`` in place by exact overlap-space steps."""
    codes = _use_compiled(act, act_t, backend)
    if codes is None:
        return _purepy.overlap_steps(Q, M, P, G, chi, z, gamma, delta, d, act, act_t)
    return _core.overlap_steps(Q, M, _c(P), _c(G), _c(chi), _c(z), float(gamma), float(delta),
                               int(d), *codes)
