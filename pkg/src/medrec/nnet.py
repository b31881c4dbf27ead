"""GRU cell, Adam optimizer and the named-tensor checkpoint format."""

from __future__ import annotations

import struct

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import ConfigError, DataError, ShapeError

CHECKPOINT_MAGIC = b"MEDRECKP"
CHECKPOINT_VERSION = 1


def uniform_init(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


class GruCell:
    """Single gated recurrent unit cell (update/reset/candidate gates)."""

    def __init__(self, input_size, hidden_size, rng, name):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.name = name
        b = 1.0 / np.sqrt(hidden_size)

        def p(suffix, shape):
            return Parameter(uniform_init(rng, shape, b), f"{name}.{suffix}")

        self.w_z = p("w_z", (hidden_size, input_size))
        self.u_z = p("u_z", (hidden_size, hidden_size))
        self.b_z = p("b_z", (hidden_size,))
        self.w_r = p("w_r", (hidden_size, input_size))
        self.u_r = p("u_r", (hidden_size, hidden_size))
        self.b_r = p("b_r", (hidden_size,))
        self.w_n = p("w_n", (hidden_size, input_size))
        self.u_n = p("u_n", (hidden_size, hidden_size))
        self.b_n = p("b_n", (hidden_size,))

    def parameters(self):
        return [self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r,
                self.w_n, self.u_n, self.b_n]

    def step(self, x, h):
        if x.shape != (self.input_size,):
            raise ShapeError(f"{self.name}: input shape {x.shape}, expected ({self.input_size},)")
        if h.shape != (self.hidden_size,):
            raise ShapeError(f"{self.name}: hidden shape {h.shape}, expected ({self.hidden_size},)")
        z = ad.sigmoid(ad.matmul(self.w_z, x) + ad.matmul(self.u_z, h) + self.b_z)
        r = ad.sigmoid(ad.matmul(self.w_r, x) + ad.matmul(self.u_r, h) + self.b_r)
        n = ad.tanh(ad.matmul(self.w_n, x) + ad.mul(r, ad.matmul(self.u_n, h)) + self.b_n)
        one = Tensor(np.ones(self.hidden_size))
        return ad.mul(one - z, n) + ad.mul(z, h)


def gru_sequence(cell, inputs, h0=None):
    """Run ``cell`` over ``inputs``; returns one hidden state per input."""
    if h0 is None:
        h = Tensor(np.zeros(cell.hidden_size))
    else:
        h = h0
        if h.shape != (cell.hidden_size,):
            raise ShapeError(f"{cell.name}: h0 shape {h.shape}, expected ({cell.hidden_size},)")
    hiddens = []
    for x in inputs:
        h = cell.step(x, h)
        hiddens.append(h)
    return hiddens


class Adam:
    """Adam with bias correction; moments persist across steps."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            self._m[i] = b1 * self._m[i] + (1 - b1) * g
            self._v[i] = b2 * self._v[i] + (1 - b2) * g * g
            m_hat = self._m[i] / (1 - b1 ** self.t)
            v_hat = self._v[i] / (1 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# -- checkpoint io ---------------------------------------------------------
# Layout: magic, u32 version, u32 tensor count, then per tensor:
# u16 name length, utf-8 name, u8 ndim, u32 dims..., raw '<f8' values.


def save_checkpoint(tensors, path):
    """Write named float64 arrays; round-trips bit-exactly."""
    items = sorted(tensors.items()) if isinstance(tensors, dict) else \
        sorted((p.name, p.data) for p in tensors)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(items)))
        for name, arr in items:
            arr = np.asarray(arr, dtype="<f8")  # ascontiguousarray would promote 0-d to 1-d
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path):
    """Read a checkpoint back into a name -> ndarray dict."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            n = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise DataError(f"{path}: truncated tensor {name}")
            out[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return out
