"""Self-describing binary checkpoints with a trailing integrity checksum."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict

import numpy as np

from . import autodiff as ad
from .errors import ChecksumMismatch, VersionMismatch
from .model import ModelConfig

MAGIC = b"FSCP"
VERSION = 1


def save_checkpoint(params: dict, cfg: ModelConfig, path, pipeline: dict | None = None):
    """Write params + config (+ feature pipeline metadata) with a sha256 tail."""
    for name, t in params.items():
        if not np.all(np.isfinite(t.data)):
            raise ValueError(f"refusing to save non-finite parameter {name}")
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    meta = {"config": asdict(cfg), "pipeline": pipeline or {}}
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    blob += struct.pack("<I", len(meta_bytes))
    blob += meta_bytes
    blob += struct.pack("<I", len(params))
    for name in sorted(params):
        data = np.ascontiguousarray(params[name].data, dtype="<f4")
        nb = name.encode()
        blob += struct.pack("<H", len(nb)) + nb
        blob += struct.pack("<B", data.ndim)
        blob += struct.pack(f"<{data.ndim}I", *data.shape)
        blob += data.tobytes()
    blob += hashlib.sha256(blob).digest()
    with open(path, "wb") as f:
        f.write(blob)


def load_checkpoint(path):
    """Returns (params, ModelConfig, pipeline dict)."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 44 or blob[:4] != MAGIC:
        raise ChecksumMismatch(f"not a checkpoint file: {path}")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumMismatch(f"checksum mismatch in {path}")
    (version,) = struct.unpack_from("<I", body, 4)
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {VERSION}")
    (meta_len,) = struct.unpack_from("<I", body, 8)
    pos = 12
    meta = json.loads(body[pos : pos + meta_len].decode())
    pos += meta_len
    (n_params,) = struct.unpack_from("<I", body, pos)
    pos += 4
    params = {}
    for _ in range(n_params):
        (name_len,) = struct.unpack_from("<H", body, pos)
        pos += 2
        name = body[pos : pos + name_len].decode()
        pos += name_len
        ndim = body[pos]
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", body, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(body, dtype="<f4", count=size, offset=pos).reshape(shape)
        pos += 4 * size
        params[name] = ad.Tensor(data.copy(), requires_grad=True)
    cfg_fields = dict(meta["config"])
    cfg_fields["mlp_head"] = tuple(cfg_fields.get("mlp_head", ()))
    cfg = ModelConfig(**cfg_fields)
    return params, cfg, meta["pipeline"]
