"""Binary model files.

Layout: magic ``TRJC1`` (5 bytes), format version (1 byte), header length
(uint32 little-endian), a UTF-8 JSON header, then every parameter array as
little-endian float32 in header order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import BadMagicError, InputError, TruncatedModelError, VersionMismatchError
from .cnn import FORMAT_VERSION, PARAM_ORDER, Model

MAGIC = b"TRJC1"


def dumps(model):
    header = {
        "input": {"size": model.input_size, "channels": model.channels},
        "layers": model.layers,
        "classes": list(model.classes),
        "seed": model.seed,
        "params": [{"name": k, "shape": list(model.params[k].shape)} for k in PARAM_ORDER],
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, bytes([FORMAT_VERSION]), struct.pack("<I", len(hbytes)), hbytes]
    for k in PARAM_ORDER:
        parts.append(np.ascontiguousarray(model.params[k], dtype="<f4").tobytes())
    return b"".join(parts)


def loads(data):
    if len(data) < len(MAGIC):
        raise TruncatedModelError("model stream shorter than its magic number")
    if data[:5] != MAGIC:
        raise BadMagicError(f"bad magic {data[:5]!r}, expected {MAGIC!r}")
    if len(data) < 10:
        raise TruncatedModelError("model stream truncated in the preamble")
    if data[5] != FORMAT_VERSION:
        raise VersionMismatchError(f"model format version {data[5]}, this build reads {FORMAT_VERSION}")
    (hlen,) = struct.unpack("<I", data[6:10])
    pos = 10 + hlen
    if len(data) < pos:
        raise TruncatedModelError("model stream truncated in the header")
    header = json.loads(data[10:pos].decode("utf-8"))
    params = {}
    for spec in header["params"]:
        shape = tuple(spec["shape"])
        nbytes = 4 * int(np.prod(shape))
        if len(data) < pos + nbytes:
            raise TruncatedModelError(f"model stream truncated inside parameter {spec['name']}")
        params[spec["name"]] = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=pos).reshape(shape).astype(np.float32)
        pos += nbytes
    if pos != len(data):
        raise TruncatedModelError(f"{len(data) - pos} trailing bytes after the last parameter")
    return Model(
        input_size=header["input"]["size"],
        channels=header["input"]["channels"],
        params=params,
        seed=header["seed"],
        classes=tuple(header["classes"]),
        layers=header["layers"],
    )


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load_model(path):
    try:
        with open(path, "rb") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise InputError(f"cannot read model file {path}: {exc}") from exc
