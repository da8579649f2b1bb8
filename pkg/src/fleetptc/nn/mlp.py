"""Minimal dense-network core: tanh MLP with hand-derived exact gradients,
bias-corrected Adam, and a byte-exact binary checkpoint format.

Everything is float64 and value-semantic: parameter updates return new
arrays, so snapshots of a network can be passed around without defensive
copies.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = b"FLNN"
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    """Raised when tensors fed to a network do not match its layout."""


class NonFiniteGradError(ValueError):
    """Raised when an optimizer step receives non-finite gradients."""


@dataclass
class MlpSpec:
    """Layer layout of a dense network (hidden layers use tanh)."""

    input_dim: int
    hidden_layers: tuple = (256, 256, 256)
    output_dim: int = 1
    activation: str = "tanh"

    def dims(self):
        return (self.input_dim, *self.hidden_layers, self.output_dim)

    def __post_init__(self):
        if self.input_dim <= 0 or self.output_dim <= 0 or any(h <= 0 for h in self.hidden_layers):
            raise ValueError("all layer dims must be positive")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")


class Mlp:
    """Dense tanh network y = W_L·tanh(...tanh(W_0·x + b_0)...) + b_L.

    weights[i] has shape (out_i, in_i), biases[i] shape (out_i,).  The final
    layer is linear (no activation).
    """

    def __init__(self, weights, biases):
        if len(weights) != len(biases):
            raise ShapeError("weights/biases length mismatch")
        for W, b in zip(weights, biases):
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise ShapeError(f"bad layer shapes {W.shape} / {b.shape}")
        self.weights = [np.ascontiguousarray(W, dtype=np.float64) for W in weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in biases]

    # -- construction -----------------------------------------------------

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator) -> "Mlp":
        """Scaled uniform fan-in init: W ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
        dims = spec.dims()
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            lim = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    def copy(self) -> "Mlp":
        return Mlp([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    @property
    def dims(self):
        return (self.weights[0].shape[1], *[W.shape[0] for W in self.weights])

    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    # -- forward / backward ----------------------------------------------

    def forward(self, X):
        """Plain forward; X is (n, in) or (in,).  Returns matching shape."""
        return self.forward_cached(X)[0]

    def forward_cached(self, X):
        """Forward pass keeping per-layer activations for backward().

        Returns (Y, cache) where cache is the list of layer inputs
        [X, h_1, ..., h_{L-1}] with h_k = tanh(pre-activation).
        """
        X = np.asarray(X, dtype=np.float64)
        squeeze = X.ndim == 1
        H = np.atleast_2d(X)
        if H.shape[1] != self.weights[0].shape[1]:
            raise ShapeError(f"input dim {H.shape[1]} != {self.weights[0].shape[1]}")
        cache = [H]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            H = H @ W.T + b
            if i < last:
                H = np.tanh(H)
                cache.append(H)
        return (H[0] if squeeze else H), cache

    def backward(self, cache, dY):
        """Exact gradients of sum(dY * forward(X)) w.r.t. params and input.

        dY is (n, out) or (out,).  Returns (grads, dX) where grads is a list
        of (dW, db) matching the layer list.
        """
        dY = np.atleast_2d(np.asarray(dY, dtype=np.float64))
        if dY.shape[1] != self.weights[-1].shape[0]:
            raise ShapeError("output grad dim mismatch")
        grads = [None] * len(self.weights)
        delta = dY
        for i in range(len(self.weights) - 1, -1, -1):
            H_in = cache[i]
            grads[i] = (delta.T @ H_in, delta.sum(axis=0))
            delta = delta @ self.weights[i]
            if i > 0:
                delta = delta * (1.0 - cache[i] ** 2)  # d tanh = 1 - tanh^2
        return grads, delta

    # -- parameter plumbing ------------------------------------------------

    def params_list(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def replace_params(self, flat_list) -> "Mlp":
        ws = flat_list[0::2]
        bs = flat_list[1::2]
        return Mlp(list(ws), list(bs))

    def named_tensors(self) -> dict:
        out = {}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            out[f"layer{i}/W"] = W
            out[f"layer{i}/b"] = b
        return out

    @classmethod
    def from_named_tensors(cls, tensors: dict) -> "Mlp":
        n = len(tensors) // 2
        weights = [tensors[f"layer{i}/W"] for i in range(n)]
        biases = [tensors[f"layer{i}/b"] for i in range(n)]
        return cls(weights, biases)

    def params_equal(self, other: "Mlp") -> bool:
        return all(
            np.array_equal(a, b)
            for a, b in zip(self.params_list(), other.params_list())
        )


def flatten_grads(grads):
    """[(dW, db), ...] -> flat list interleaved like params_list()."""
    out = []
    for dW, db in grads:
        out.extend((dW, db))
    return out


# -- Adam ------------------------------------------------------------------


@dataclass
class AdamState:
    """Bias-corrected Adam state over a list of parameter tensors."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr, **kw) -> "AdamState":
        return cls(lr=lr,
                   m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], **kw)


def adam_step(state: AdamState, params, grads):
    """One Adam update.  Returns (new_params, new_state); inputs untouched.

    Non-finite gradients reject the update (NonFiniteGradError) so a broken
    loss cannot poison the parameters.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("adam_step: params/grads/state length mismatch")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradError("non-finite gradient")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        p = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_params.append(p)
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(lr=state.lr, beta1=b1, beta2=b2, eps=state.eps,
                          step=t, m=new_m, v=new_v)
    return new_params, new_state


# -- checkpoint format -------------------------------------------------------
#
# magic "FLNN" | version u16 | tensor count u32, then per tensor:
#   name length u32 | name utf-8 | rank u32 | dims u32 each | float64 data
# All integers little-endian; data is IEEE-754 doubles in C order.


class CheckpointError(ValueError):
    pass


def pack_tensors(tensors: dict) -> bytes:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<HI", CHECKPOINT_VERSION, len(tensors)))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        nb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<I", arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<I", d))
        buf.write(arr.astype("<f8", copy=False).tobytes(order="C"))
    return buf.getvalue()


def unpack_tensors(data: bytes) -> dict:
    view = memoryview(data)
    if len(view) < 10:
        raise CheckpointError("truncated checkpoint header")
    if bytes(view[:4]) != CHECKPOINT_MAGIC:
        raise CheckpointError("bad checkpoint magic")
    version, count = struct.unpack_from("<HI", view, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 10
    tensors = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<I", view, off)
            off += 4
            name = bytes(view[off:off + name_len]).decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<I", view, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}I", view, off)
            off += 4 * rank
            size = int(np.prod(dims, dtype=np.int64)) if rank else 1
            raw = view[off:off + 8 * size]
            if len(raw) != 8 * size:
                raise struct.error("short tensor data")
            off += 8 * size
        except struct.error as err:
            raise CheckpointError(f"truncated checkpoint: {err}") from None
        tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
    if off != len(view):
        raise CheckpointError("trailing bytes after last tensor")
    return tensors


def save_tensors(path, tensors: dict):
    with open(path, "wb") as fh:
        fh.write(pack_tensors(tensors))


def load_tensors(path) -> dict:
    with open(path, "rb") as fh:
        return unpack_tensors(fh.read())
