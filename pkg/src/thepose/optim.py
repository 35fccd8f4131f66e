"""Parameter store, Adam update with a cosine-tail schedule, checkpoints.

Checkpoint layout (little-endian): magic "THEPOSE-CKPT", version u32, then
per parameter: name length u32, name bytes (utf-8), shape rank u32, dims
u32 each, raw float64 data. Parameters are read until end of file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import Error

CKPT_MAGIC = b"THEPOSE-CKPT"
CKPT_VERSION = 1


class ParamStore:
    """Ordered name -> float64 array map with per-parameter Adam moments."""

    def __init__(self):
        self._params: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def add(self, name: str, array):
        if name in self._params:
            raise Error("shape", f"duplicate parameter name {name!r}")
        arr = np.ascontiguousarray(array, dtype=np.float64)
        self._params[name] = arr
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name]

    def __setitem__(self, name: str, array):
        arr = np.ascontiguousarray(array, dtype=np.float64)
        if name in self._params and arr.shape != self._params[name].shape:
            raise Error("shape", f"parameter {name!r} changed shape")
        if name not in self._params:
            self.add(name, arr)
        else:
            self._params[name] = arr

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def n_values(self) -> int:
        return sum(p.size for p in self._params.values())

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, p in self._params.items():
            out.add(name, p.copy())
        return out


@dataclass(frozen=True)
class CosineTail:
    """Constant lr for the first (1 - tail) of training, cosine decay after.

    With 1-based steps the boundary step still gets the full base lr and the
    final step reaches the cos(pi) endpoint (zero).
    """

    total_steps: int
    tail: float = 0.28

    def factor(self, step_index: int) -> float:
        t = step_index / self.total_steps
        start = 1.0 - self.tail
        if t <= start:
            return 1.0
        frac = (t - start) / self.tail
        return 0.5 * (1.0 + np.cos(np.pi * min(frac, 1.0)))


def optimizer_step(store: ParamStore, grads, lr, step_index, schedule=None):
    """Adam update (beta1=0.9, beta2=0.999, eps=1e-8), in place.

    step_index is 1-based and drives both bias correction and the schedule.
    """
    missing = [n for n in store.names() if n not in grads]
    if missing:
        raise Error("shape", f"gradients missing for {missing[:3]}")
    eff_lr = lr * (schedule.factor(step_index) if schedule is not None else 1.0)
    b1, b2, eps = 0.9, 0.999, 1e-8
    c1 = 1.0 - b1**step_index
    c2 = 1.0 - b2**step_index
    for name in store.names():
        g = grads[name]
        m = store.m[name]
        v = store.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        store[name] = store[name] - eff_lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return store


def save_checkpoint(store: ParamStore, path):
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", CKPT_VERSION))
        for name, arr in store.items():
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> ParamStore:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise Error("bad-magic", f"{path} is not a checkpoint file")
    off = len(CKPT_MAGIC)

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise Error("truncated", f"checkpoint {path} ends early")
        out = blob[off : off + n]
        off += n
        return out

    (version,) = struct.unpack("<I", take(4))
    if version != CKPT_VERSION:
        raise Error("bad-version", f"checkpoint version {version}")
    store = ParamStore()
    while off < len(blob):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(8 * count), dtype="<f8").reshape(dims)
        store.add(name, data.astype(np.float64))
    return store
