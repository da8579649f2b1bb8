"""Kernel backend selection for single-input network evaluation.

At import we try the compiled Cython kernel (``_fastmlp``); if it is missing
or ``FLEETPTC_NO_FAST=1`` is set, a pure-numpy runner with identical
semantics is used instead.  ``make_runner(mlp)`` returns whichever is
active; batched evaluation always goes through numpy's BLAS (already
optimal there).
"""

import os

import numpy as np

from .mlp import Mlp

if os.environ.get("FLEETPTC_NO_FAST") == "1":
    _fastmlp = None
else:
    try:
        from . import _fastmlp
    except ImportError:
        _fastmlp = None

HAVE_FAST = _fastmlp is not None


def backend_name() -> str:
    return "cython" if HAVE_FAST else "numpy"


def pack_mlp(mlp: Mlp):
    """Flatten layer params into (dims, buffer) for the compiled kernel."""
    dims = np.array(mlp.dims, dtype=np.int64)
    parts = []
    for W, b in zip(mlp.weights, mlp.biases):
        parts.append(W.ravel(order="C"))
        parts.append(b)
    return dims, np.concatenate(parts)


class NumpyRunner:
    """Reference single-input forward; same math as Mlp.forward."""

    def __init__(self, mlp: Mlp):
        self.weights = mlp.weights
        self.biases = mlp.biases

    def forward_one(self, x):
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = W @ h + b
            if i < last:
                h = np.tanh(h)
        return h


class FastRunner:
    """Compiled fused forward over a packed parameter buffer."""

    def __init__(self, mlp: Mlp):
        self._dims, self._buf = pack_mlp(mlp)
        self._work = np.empty(2 * int(self._dims.max()))
        self._out_dim = int(self._dims[-1])

    def forward_one(self, x):
        out = np.empty(self._out_dim)
        _fastmlp.mlp_forward_one(self._dims, self._buf,
                                 np.ascontiguousarray(x, dtype=np.float64),
                                 self._work, out)
        return out


def make_runner(mlp: Mlp):
    """Single-input forward executor for the current parameters.

    The runner snapshots the packed parameters, so build a fresh one after
    any parameter update.  Not shareable across threads (scratch reuse).
    """
    return FastRunner(mlp) if HAVE_FAST else NumpyRunner(mlp)
