"""Binary checkpoint format.

Layout, little-endian throughout::

    b"MANETCKP"  u32 version
    str model_id  str config_text  u64 global_step
    u32 n_params, then per parameter: str name, u32 ndim, u64 dims[ndim], f64 data
    f64 lr, beta1, beta2, eps  u64 adam_step
    u32 n_moments, then per moment pair: str name, f64 m[size], f64 v[size]
    u32 crc32 of every preceding byte

``str`` is a u32 byte length followed by UTF-8 bytes.
"""
from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IntegrityError, VersionError
from .nn import AdamState

MAGIC = b"MANETCKP"
VERSION = 1


@dataclass
class Checkpoint:
    version: int
    model_id: str
    config_text: str
    global_step: int
    params: dict  # name -> float64 array
    optim: AdamState


def _str(text):
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _block(arr):
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(path, model, optim, global_step, model_id, config_text=""):
    parts = [MAGIC, struct.pack("<I", VERSION), _str(model_id), _str(config_text),
             struct.pack("<Q", global_step), struct.pack("<I", len(model.params))]
    for name, p in model.params.items():
        parts += [_str(name), struct.pack("<I", p.data.ndim),
                  struct.pack(f"<{p.data.ndim}Q", *p.data.shape), _block(p.data)]
    parts.append(struct.pack("<4dQ", optim.lr, optim.beta1, optim.beta2, optim.eps, optim.step))
    names = [n for n in model.params if n in optim.m]
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        parts += [_str(name), _block(optim.m[name]), _block(optim.v[name])]
    body = b"".join(parts)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(body + struct.pack("<I", zlib.crc32(body)))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf, pos):
        self.buf, self.pos = buf, pos

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise IntegrityError("checkpoint is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self):
        (n,) = self.unpack("<I")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise IntegrityError("checkpoint string is not valid UTF-8") from None

    def floats(self, shape):
        n = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < len(MAGIC) + 4:
        raise IntegrityError("checkpoint is truncated")
    if buf[:len(MAGIC)] != MAGIC:
        raise VersionError("not a manet checkpoint (bad magic bytes)")
    (version,) = struct.unpack_from("<I", buf, len(MAGIC))
    if version != VERSION:
        raise VersionError(f"checkpoint format version {version}, expected {VERSION}")
    if len(buf) < len(MAGIC) + 8:
        raise IntegrityError("checkpoint is truncated")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise IntegrityError("checkpoint checksum mismatch (truncated or corrupt)")

    r = _Reader(body, len(MAGIC) + 4)
    model_id = r.string()
    config_text = r.string()
    (global_step,) = r.unpack("<Q")
    (n_params,) = r.unpack("<I")
    params = {}
    for _ in range(n_params):
        name = r.string()
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}Q")
        params[name] = r.floats(shape)
    lr, b1, b2, eps, step = r.unpack("<4dQ")
    optim = AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps, step=step)
    (n_moments,) = r.unpack("<I")
    for _ in range(n_moments):
        name = r.string()
        if name not in params:
            raise IntegrityError(f"optimizer state for unknown parameter {name!r}")
        optim.m[name] = r.floats(params[name].shape)
        optim.v[name] = r.floats(params[name].shape)
    if r.pos != len(body):
        raise IntegrityError("trailing bytes in checkpoint")
    return Checkpoint(version, model_id, config_text, global_step, params, optim)


def restore(model, checkpoint, model_id=None):
    """Copy checkpoint values into ``model`` after validating identity and shapes."""
    if model_id is not None and checkpoint.model_id != model_id:
        raise ConfigError(f"checkpoint holds {checkpoint.model_id!r}, expected {model_id!r}")
    if list(checkpoint.params) != list(model.params):
        raise ConfigError("checkpoint parameter names do not match the model")
    for name, value in checkpoint.params.items():
        if value.shape != model.params[name].shape:
            raise ConfigError(
                f"parameter {name!r}: checkpoint shape {value.shape}, "
                f"model shape {model.params[name].shape}"
            )
    for name, value in checkpoint.params.items():
        np.copyto(model.params[name].data, value)
    return model
