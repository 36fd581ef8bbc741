"""Forward-only layer primitives, seeded initialisation and the weight file format."""
from __future__ import annotations

import dataclasses
import functools
import struct
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from threadpoolctl import ThreadpoolController

from .tensor import SeededRng, ShapeError, as_tensor3

WEIGHTS_MAGIC = b"SSRW"
WEIGHTS_VERSION = 1

_threadpools = ThreadpoolController()


def deterministic_blas(fn):
    """Run ``fn`` with BLAS pinned to one thread.

    Multithreaded BLAS splits reductions differently per thread count, which
    moves results by an ulp; pinning keeps forward passes bit-reproducible.
    """
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with _threadpools.limit(limits=1, user_api="blas"):
            return fn(*args, **kwargs)
    return wrapper


def conv2d(x, weight, bias=None, stride: int = 1) -> np.ndarray:
    """Dense 2-D convolution (cross-correlation) with zero 'same' padding."""
    x = as_tensor3(x)
    weight = np.asarray(weight, dtype=np.float64)
    c_out, c_in, kh, kw = weight.shape
    if x.shape[0] != c_in:
        raise ShapeError(f"conv expects {c_in} input channels, got {x.shape[0]}")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    out = np.tensordot(weight, win, axes=([1, 2, 3], [0, 3, 4]))
    if bias is not None:
        out = out + np.asarray(bias)[:, None, None]
    return out


def pointwise(x, weight, bias=None) -> np.ndarray:
    """1x1 convolution; ``weight`` is (C_out, C_in)."""
    x = as_tensor3(x)
    weight = np.asarray(weight, dtype=np.float64)
    c, h, w = x.shape
    if weight.shape[1] != c:
        raise ShapeError(f"projection expects {weight.shape[1]} channels, got {c}")
    out = (weight @ x.reshape(c, h * w)).reshape(weight.shape[0], h, w)
    if bias is not None:
        out = out + np.asarray(bias)[:, None, None]
    return out


def depthwise3x3(x, weight, bias=None) -> np.ndarray:
    """Per-channel 3x3 convolution; ``weight`` is (C, 3, 3)."""
    x = as_tensor3(x)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))
    out = np.einsum("chwij,cij->chw", win, weight)
    if bias is not None:
        out = out + np.asarray(bias)[:, None, None]
    return out


def leaky_relu(x, slope: float = 0.2) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


def relu(x) -> np.ndarray:
    return np.maximum(x, 0.0)


class Initializer:
    """Draws ``uniform(-a, a)`` with ``a = sqrt(1 / fan_in)`` in call order.

    All parameters come from one stream, so the order in which a model's
    builder asks for them fixes the weights for a given seed.  ``zero=True``
    hands out zeros instead, for residual-path checks.
    """

    def __init__(self, seed: int, zero: bool = False, stream: str = "weights"):
        self.rng = SeededRng(seed).derive(stream)
        self.zero = zero

    def uniform(self, shape, fan_in: int) -> np.ndarray:
        if self.zero:
            return np.zeros(shape)
        a = np.sqrt(1.0 / fan_in)
        return self.rng.gen.uniform(-a, a, size=shape)

    def conv(self, c_out: int, c_in: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        fan_in = c_in * k * k
        return self.uniform((c_out, c_in, k, k), fan_in), self.uniform((c_out,), fan_in)

    def linear(self, c_out: int, c_in: int) -> tuple[np.ndarray, np.ndarray]:
        return self.uniform((c_out, c_in), c_in), self.uniform((c_out,), c_in)

    def scale(self, c: int, value: float = 1.0) -> np.ndarray:
        return np.zeros(c) if self.zero else np.full(c, float(value))


# -- parameter trees ------------------------------------------------------------

def named_arrays(obj, prefix: str = "") -> dict[str, np.ndarray]:
    """Flatten nested dataclasses / lists of arrays to ``{dotted.name: array}``."""
    out: dict[str, np.ndarray] = {}
    if dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            out.update(named_arrays(getattr(obj, f.name), f"{prefix}{f.name}."))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            out.update(named_arrays(item, f"{prefix}{i}."))
    elif isinstance(obj, np.ndarray):
        out[prefix[:-1]] = obj
    return out


def load_arrays_into(obj, arrays: dict[str, np.ndarray], prefix: str = ""):
    """Inverse of :func:`named_arrays`: returns a copy of ``obj`` with arrays replaced."""
    if dataclasses.is_dataclass(obj):
        changes = {f.name: load_arrays_into(getattr(obj, f.name), arrays, f"{prefix}{f.name}.")
                   for f in dataclasses.fields(obj)}
        return dataclasses.replace(obj, **changes)
    if isinstance(obj, list):
        return [load_arrays_into(item, arrays, f"{prefix}{i}.") for i, item in enumerate(obj)]
    if isinstance(obj, tuple):
        return tuple(load_arrays_into(item, arrays, f"{prefix}{i}.") for i, item in enumerate(obj))
    if isinstance(obj, np.ndarray):
        new = arrays[prefix[:-1]]
        if new.shape != obj.shape:
            raise ShapeError(f"{prefix[:-1]}: expected {obj.shape}, got {new.shape}")
        return new
    return obj


def save_weights(path, arrays: dict[str, np.ndarray]) -> None:
    """Header (magic, version, shape table) followed by little-endian float64 data."""
    header = [WEIGHTS_MAGIC, struct.pack("<II", WEIGHTS_VERSION, len(arrays))]
    for name, arr in arrays.items():
        raw = name.encode()
        header.append(struct.pack("<H", len(raw)) + raw)
        header.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
    body = [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values()]
    Path(path).write_bytes(b"".join(header + body))


def load_weights(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != WEIGHTS_MAGIC:
        raise ValueError(f"{path}: not a weight file")
    version, count = struct.unpack_from("<II", data, 4)
    if version != WEIGHTS_VERSION:
        raise ValueError(f"{path}: unsupported weight file version {version}")
    pos = 12
    table = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        name = data[pos + 2:pos + 2 + n].decode()
        pos += 2 + n
        (ndim,) = struct.unpack_from("<B", data, pos)
        shape = struct.unpack_from(f"<{ndim}I", data, pos + 1)
        pos += 1 + 4 * ndim
        table.append((name, shape))
    out = {}
    for name, shape in table:
        size = int(np.prod(shape, dtype=np.int64))
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    return out
