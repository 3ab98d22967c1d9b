"""Versioned binary checkpoints.

Layout: a text header (magic line, the model configuration as key=value
lines, a tensor count), then per tensor one text line ``path dim0,dim1,...``
followed by the raw little-endian float64 buffer. Tensors are written in
sorted path order; save/load round-trips bit-exactly.
"""

from __future__ import annotations

import io
from dataclasses import fields

import numpy as np

from ..errors import InputError
from ..fileio import atomic_write_bytes
from .config import ModelConfig, Parameters, parameter_shapes

_MAGIC = b"pivotnmt-ckpt 1\n"

_CONFIG_FIELDS = [f.name for f in fields(ModelConfig)]


def dumps(params: Parameters, config: ModelConfig) -> bytes:
    expected = parameter_shapes(config)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise InputError(f"parameter inventory mismatch: missing={missing}, extra={extra}")
    buf = io.BytesIO()
    buf.write(_MAGIC)
    for name in _CONFIG_FIELDS:
        buf.write(f"{name}={getattr(config, name)}\n".encode())
    buf.write(f"tensors={len(params)}\n".encode())
    for path in sorted(params):
        arr = np.ascontiguousarray(params[path], dtype=np.float64)
        dims = ",".join(str(d) for d in arr.shape)
        buf.write(f"{path} {dims}\n".encode())
        buf.write(arr.astype("<f8", copy=False).tobytes())
    return buf.getvalue()


def save_checkpoint(path, params: Parameters, config: ModelConfig) -> None:
    atomic_write_bytes(path, dumps(params, config))


def loads(data: bytes) -> tuple[Parameters, ModelConfig]:
    stream = io.BytesIO(data)

    def read_line() -> str:
        line = stream.readline()
        if not line.endswith(b"\n"):
            raise InputError("truncated checkpoint")
        return line[:-1].decode()

    if stream.readline() != _MAGIC:
        raise InputError("not a pivotnmt checkpoint (bad magic line)")
    cfg_kwargs = {}
    for name in _CONFIG_FIELDS:
        line = read_line()
        key, _, value = line.partition("=")
        if key != name:
            raise InputError(f"checkpoint header: expected {name}=..., got {line!r}")
        cfg_kwargs[name] = float(value) if name == "dropout_rate" else int(value)
    config = ModelConfig(**cfg_kwargs)

    count_line = read_line()
    if not count_line.startswith("tensors="):
        raise InputError("checkpoint header missing tensor count")
    n_tensors = int(count_line.split("=", 1)[1])
    params: Parameters = {}
    for _ in range(n_tensors):
        header = read_line()
        path, _, dims = header.partition(" ")
        shape = tuple(int(d) for d in dims.split(",")) if dims else ()
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = stream.read(size * 8)
        if len(raw) != size * 8:
            raise InputError(f"truncated tensor data for {path!r}")
        params[path] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()

    expected = parameter_shapes(config)
    if set(params) != set(expected):
        raise InputError("checkpoint tensors do not match the config inventory")
    for path, shape in expected.items():
        if params[path].shape != shape:
            raise InputError(
                f"tensor {path!r} has shape {params[path].shape}, expected {shape}"
            )
    return params, config


def load_checkpoint(path) -> tuple[Parameters, ModelConfig]:
    with open(path, "rb") as f:
        return loads(f.read())
